"""
Common schemas shared by the experiment documents.
"""

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class KernelKind(str, Enum):
    """How the walker kernel is derived."""
    COMBINATORIAL = "combinatorial"  # Q = -L
    RANDOM_WALK = "random_walk"      # Q = -L^rw
    DTMC_FILE = "dtmc_file"          # Q = P - I, P read from a kernel document


class GraphFamily(str, Enum):
    PATH = "path"
    CYCLE = "cycle"
    COMPLETE = "complete"
    STAR = "star"


class SyntheticGraph(BaseModel):
    """Fixed-seed random connected graph."""

    nodes: int = Field(ge=2, description="Number of nodes")
    edges: int = Field(ge=1, description="Number of edges (at least nodes - 1)")
    seed: int = Field(default=0, ge=0, description="Generator seed")

    @model_validator(mode="after")
    def check_edge_range(self) -> "SyntheticGraph":
        if not self.nodes - 1 <= self.edges <= self.nodes * (self.nodes - 1) // 2:
            raise ValueError(f"edges must lie in [{self.nodes - 1}, {self.nodes * (self.nodes - 1) // 2}]")
        return self


class FamilyGraph(BaseModel):
    """Small named graph families used by tests and comparisons."""

    name: GraphFamily
    size: int = Field(ge=2, le=4096, description="Number of nodes (star: leaves + 1)")


class GraphSource(BaseModel):
    """
    Where the graph comes from: exactly one of an edge-list file, a synthetic
    random graph or a named family.
    """

    graph_path: Optional[str] = Field(default=None, description="Edge-list file")
    index_base: int = Field(default=0, ge=0, le=1, description="Index of the first node in the file")
    symmetrize: bool = Field(default=False, description="Edge list lists directed arcs")
    synthetic: Optional[SyntheticGraph] = None
    family: Optional[FamilyGraph] = None
    dtmc_path: Optional[str] = Field(default=None, description="Kernel document with a transition matrix")

    @model_validator(mode="after")
    def check_single_source(self) -> "GraphSource":
        sources = [self.graph_path is not None, self.synthetic is not None, self.family is not None]
        if sum(sources) > 1:
            raise ValueError("give only one of graph_path, synthetic and family")
        if sum(sources) == 0 and self.dtmc_path is None:
            raise ValueError("a graph source (graph_path, synthetic or family) or dtmc_path is required")
        return self


class DensityPair(BaseModel):
    """Explicit initial densities (x, y) on the simplex."""

    x: List[float] = Field(min_length=2)
    y: List[float] = Field(min_length=2)

    @field_validator("x", "y")
    @classmethod
    def check_simplex(cls, v: List[float]) -> List[float]:
        if any(entry < 0 for entry in v):
            raise ValueError("densities must be non-negative")
        if abs(sum(v) - 1.0) > 1e-9:
            raise ValueError(f"densities must sum to 1, got {sum(v)!r}")
        return v

    @model_validator(mode="after")
    def check_lengths(self) -> "DensityPair":
        if len(self.x) != len(self.y):
            raise ValueError("x and y must have the same length")
        return self
