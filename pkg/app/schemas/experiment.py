"""
Experiment documents: the JSON files driving simulate / dynamic / compare.
"""

from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.schemas.common import DensityPair, GraphSource, KernelKind

MAX_SEED = 2 ** 64 - 1
DEFAULT_SAMPLE_COUNT = 50


def _strictly_increasing(values: List[float]) -> bool:
    return all(b > a for a, b in zip(values, values[1:]))


class RemovalEntry(BaseModel):
    """One scheduled removal: explicit node labels or a random count."""

    time: float = Field(gt=0, description="Simulation-clock time of the removal")
    nodes: Optional[List[int]] = Field(default=None, description="Original node labels to remove")
    count: Optional[int] = Field(default=None, ge=1, description="Number of random connectivity-preserving nodes")

    @model_validator(mode="after")
    def check_exactly_one(self) -> "RemovalEntry":
        if (self.nodes is None) == (self.count is None):
            raise ValueError("give exactly one of nodes and count")
        if self.nodes is not None and (not self.nodes or len(set(self.nodes)) != len(self.nodes)):
            raise ValueError("nodes must be a nonempty list without duplicates")
        return self


class InitialCounts(BaseModel):
    X: List[int]
    Y: List[int]

    @field_validator("X", "Y")
    @classmethod
    def check_non_negative(cls, v: List[int]) -> List[int]:
        if any(c < 0 for c in v):
            raise ValueError("walker counts must be non-negative")
        return v


class ExperimentConfig(GraphSource):
    """
    Multi-run estimator experiment.

    Example:
        {"graph_path": "data/graphs/dolphins.edges", "kernel_kind": "combinatorial",
         "n": 15, "kappa": 1000, "T": 200, "runs": 100, "master_seed": 7,
         "sample_step": 10, "preset": "dolphins-dyn"}
    """

    kernel_kind: KernelKind = KernelKind.COMBINATORIAL
    n: int = Field(ge=1, description="Walkers per group")
    kappa: float = Field(ge=0, description="Interaction strength")
    T: float = Field(gt=0, description="Horizon")
    runs: int = Field(default=1, ge=1, description="Independent runs")
    master_seed: int = Field(default=0, ge=0, le=MAX_SEED, description="Seed of all run streams")
    sample_times: Optional[List[float]] = Field(default=None, description="Explicit metric times")
    sample_step: Optional[float] = Field(default=None, gt=0, description="Uniform metric time step")
    schedule: List[RemovalEntry] = Field(default_factory=list, description="Node removals")
    preset: Optional[str] = Field(default=None, description="Named removal schedule")
    instantaneous: bool = Field(default=False, description="Also report metrics of the instantaneous z")
    init: Optional[InitialCounts] = Field(default=None, description="Explicit initial counts; uniform if absent")

    @model_validator(mode="after")
    def check_times(self) -> "ExperimentConfig":
        if self.sample_times is not None and self.sample_step is not None:
            raise ValueError("give at most one of sample_times and sample_step")
        if self.sample_times is not None:
            if not self.sample_times:
                raise ValueError("sample_times must not be empty")
            if not _strictly_increasing(self.sample_times):
                raise ValueError("sample_times must be strictly increasing")
            if self.sample_times[0] <= 0 or self.sample_times[-1] > self.T:
                raise ValueError("sample_times must lie within (0, T]")
        if self.schedule and self.preset:
            raise ValueError("give either a schedule or a preset, not both")
        times = [entry.time for entry in self.schedule]
        if not _strictly_increasing(times):
            raise ValueError("schedule times must be strictly increasing")
        if times and times[-1] > self.T:
            raise ValueError(f"schedule time {times[-1]} lies beyond T = {self.T}")
        if (self.schedule or self.preset) and self.kernel_kind == KernelKind.DTMC_FILE:
            raise ValueError("removal schedules need a graph-derived kernel")
        if self.kernel_kind == KernelKind.DTMC_FILE and self.dtmc_path is None:
            raise ValueError("kernel_kind dtmc_file needs dtmc_path")
        if self.init is not None and (sum(self.init.X) != self.n or sum(self.init.Y) != self.n):
            raise ValueError("explicit initial counts must sum to n for both groups")
        return self

    def resolved_sample_times(self) -> List[float]:
        if self.sample_times is not None:
            return list(self.sample_times)
        step = self.sample_step or self.T / DEFAULT_SAMPLE_COUNT
        count = int(self.T / step + 1e-9)
        times = [step * (i + 1) for i in range(count)]
        if not times or times[-1] < self.T - 1e-12:
            times.append(self.T)
        return times


class CompareConfig(GraphSource):
    """
    Process-vs-ODE deviation study on a static graph.

    All runs of every n start from the same densities, so n * x must be integral.
    """

    kernel_kind: KernelKind = KernelKind.COMBINATORIAL
    kappa: float = Field(gt=0)
    T: float = Field(gt=0)
    n_values: List[int] = Field(min_length=1, description="Walkers per group to sweep")
    seeds: int = Field(default=30, ge=1, description="Runs per n")
    master_seed: int = Field(default=0, ge=0, le=MAX_SEED)
    grid_points: int = Field(default=101, ge=2, description="Evenly spaced comparison times in [0, T]")
    initial: DensityPair
    epsilon: float = Field(default=0.1, ge=0, description="Deviation threshold of the bound")
    M: Optional[float] = Field(default=None, gt=0, description="Lipschitz constant; estimated when absent")
    lipschitz_samples: int = Field(default=200, ge=1)
    dt_max: Optional[float] = Field(default=None, gt=0)

    @field_validator("n_values")
    @classmethod
    def check_n_values(cls, v: List[int]) -> List[int]:
        if any(n < 1 for n in v):
            raise ValueError("every n must be at least 1")
        if not _strictly_increasing([float(n) for n in v]):
            raise ValueError("n_values must be strictly increasing")
        return v


class OdeConfig(GraphSource):
    """
    Fluid-limit integration from one initial condition.

    Without `initial`, a random direction orthogonal to the all-ones vector
    is drawn from `seed` and embedded around the uniform density.
    """

    kernel_kind: KernelKind = KernelKind.COMBINATORIAL
    kappa: float = Field(gt=0)
    T: float = Field(gt=0)
    initial: Optional[DensityPair] = None
    seed: int = Field(default=0, ge=0, le=MAX_SEED, description="Seed of the random initial direction")
    margin: float = Field(default=0.5, gt=0, lt=1, description="Distance kept from the simplex boundary")
    dt_max: Optional[float] = Field(default=None, gt=0)
