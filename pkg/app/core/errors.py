"""
Exception hierarchy for fiedwalk.

Two families:
- ValidationFailure: the input is wrong (CLI exit code 2)
- NumericFailure: the numerics broke down (CLI exit code 3)
"""

from typing import Optional


class FiedwalkError(Exception):
    """Root of every error raised by the library."""

    exit_code = 3


class ValidationFailure(FiedwalkError, ValueError):
    exit_code = 2


class ParseError(ValidationFailure):
    """Edge-list syntax error, carrying the offending 1-based line number."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DomainError(ValidationFailure):
    """Input is well-formed but mathematically invalid for the operation."""


class DisconnectedGraphError(DomainError):
    pass


class DegenerateInputError(DomainError):
    pass


class SizeLimitError(DomainError):
    pass


class InvalidKernelError(ValidationFailure):
    pass


class NumericFailure(FiedwalkError, ArithmeticError):
    exit_code = 3


class ConvergenceError(NumericFailure):
    pass


class SingularSystemError(NumericFailure):
    pass


class ExhaustionError(NumericFailure):
    pass


class SimplexCollapseError(NumericFailure):
    """The ODE trajectory reached the diagonal set x = y."""

    def __init__(self, message: str, time: float):
        self.time = time
        super().__init__(message)
