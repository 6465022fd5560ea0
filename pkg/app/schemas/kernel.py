"""
JSON document for kernels: {n, rates | transition, pi?}.
"""

from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from app.core.kernel import Kernel, KernelSource, from_dtmc, from_rates


class KernelDocument(BaseModel):
    """A dense rate matrix Q, or a transition matrix P turned into Q = P - I."""

    n: int = Field(ge=1, description="Number of states")
    rates: Optional[List[List[float]]] = Field(default=None, description="Row-major rate matrix Q")
    transition: Optional[List[List[float]]] = Field(default=None, description="Row-major stochastic matrix P")
    pi: Optional[List[float]] = Field(default=None, description="Stationary distribution")

    @model_validator(mode="after")
    def check_shape(self) -> "KernelDocument":
        if (self.rates is None) == (self.transition is None):
            raise ValueError("give exactly one of rates and transition")
        matrix = self.rates if self.rates is not None else self.transition
        if len(matrix) != self.n or any(len(row) != self.n for row in matrix):
            raise ValueError(f"matrix must be {self.n} x {self.n}")
        if self.pi is not None and len(self.pi) != self.n:
            raise ValueError(f"pi must have {self.n} entries")
        return self


def kernel_to_document(k: Kernel) -> KernelDocument:
    return KernelDocument(
        n=k.size,
        rates=k.rates.tolist(),
        pi=None if k.stationary is None else k.stationary.tolist(),
    )


def kernel_from_document(doc: KernelDocument) -> Kernel:
    """Rates are taken as given; a transition matrix becomes Q = P - I after irreducibility checks."""
    if doc.transition is not None:
        kernel = from_dtmc(np.array(doc.transition, dtype=float))
        if doc.pi is not None:
            return from_rates(kernel.rates, np.array(doc.pi, dtype=float), KernelSource.DTMC)
        return kernel
    stationary = None if doc.pi is None else np.array(doc.pi, dtype=float)
    return from_rates(np.array(doc.rates, dtype=float), stationary)


def load_kernel_document(path: Union[str, Path]) -> Kernel:
    text = Path(path).read_text(encoding="utf-8")
    return kernel_from_document(KernelDocument.model_validate_json(text))
