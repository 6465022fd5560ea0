"""
Pydantic schemas for the JSON documents read by the CLI.

These schemas provide:
- Field-level validation with readable errors (exit code 2)
- Replayable experiment descriptions echoed into CSV headers
"""

from app.schemas.common import (
    DensityPair,
    FamilyGraph,
    GraphFamily,
    GraphSource,
    KernelKind,
    SyntheticGraph,
)
from app.schemas.experiment import (
    CompareConfig,
    ExperimentConfig,
    InitialCounts,
    OdeConfig,
    RemovalEntry,
)
from app.schemas.kernel import (
    KernelDocument,
    kernel_from_document,
    kernel_to_document,
    load_kernel_document,
)

__all__ = [
    # Common
    "DensityPair",
    "FamilyGraph",
    "GraphFamily",
    "GraphSource",
    "KernelKind",
    "SyntheticGraph",
    # Experiment
    "CompareConfig",
    "ExperimentConfig",
    "InitialCounts",
    "OdeConfig",
    "RemovalEntry",
    # Kernel
    "KernelDocument",
    "kernel_from_document",
    "kernel_to_document",
    "load_kernel_document",
]
