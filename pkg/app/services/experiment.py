"""
Experiment orchestration.

Core logic for:
- Resolving graphs and kernels from experiment documents
- Replayable removal schedules (presets, explicit label sets, random counts)
- Multi-run estimator experiments with per-epoch Fiedler references
- Process-vs-ODE deviation studies and parameter sweeps
"""

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import get_settings
from app.core.errors import DegenerateInputError, DisconnectedGraphError, DomainError
from app.core.graph import (
    Graph,
    NodeSet,
    is_connected,
    load_edge_list,
    random_connected_graph,
    remove_nodes,
    require_connected,
    sample_removable_set,
)
from app.core.kernel import Kernel, combinatorial_kernel, random_walk_kernel, rebuild_for_graph
from app.core.logs import get_logger
from app.core.ode import (
    DeviationBound,
    DeviationBoundInputs,
    OdeTrajectory,
    deviation_bound,
    embed_direction,
    estimate_lipschitz_M,
    integrate,
    sup_deviation,
)
from app.core.simulator import (
    UNIFORM,
    DynamicSchedule,
    ExplicitInit,
    ScheduledRemoval,
    Trajectory,
    estimator_z_hat,
    exit_time,
    occupation_fraction,
    run,
)
from app.core.spectral import (
    FiedlerResult,
    cosine_similarity,
    eigenspace_similarity,
    fiedler,
    rayleigh_quotient,
)
from app.core.utils import INIT_STREAM, SCHEDULE_STREAM, derive_rng
from app.schemas.common import GraphFamily, GraphSource, KernelKind
from app.schemas.experiment import CompareConfig, ExperimentConfig, OdeConfig, RemovalEntry
from app.schemas.kernel import load_kernel_document

logger = get_logger(__name__)

# (time, number of random nodes) per removal
PRESET_SCHEDULES: Dict[str, Tuple[Tuple[float, int], ...]] = {
    "dolphins-dyn": ((25.0, 4), (75.0, 3), (100.0, 6)),
    "ego-facebook-dyn": ((50.0, 196), (100.0, 150), (125.0, 154)),
}

SWEEP_N_VALUES = (15, 20, 25)
SWEEP_KAPPA_VALUES = (10.0, 100.0, 1000.0, 10000.0)

# neighborhood CS(z, v2) >= 1 - radius
DEFAULT_OCCUPATION_RADIUS = 0.1


# =============================================================================
# GRAPHS AND KERNELS
# =============================================================================

def family_graph(name: GraphFamily, size: int) -> Graph:
    """Unit-weight path, cycle, complete or star graph on `size` nodes (star centre is node 0)."""
    if size < 2:
        raise DomainError("graph families need at least two nodes")
    if name == GraphFamily.PATH:
        pairs = [(i, i + 1) for i in range(size - 1)]
    elif name == GraphFamily.CYCLE:
        if size < 3:
            raise DomainError("a cycle needs at least three nodes")
        pairs = [(i, (i + 1) % size) for i in range(size)]
    elif name == GraphFamily.COMPLETE:
        pairs = [(i, j) for i in range(size) for j in range(i + 1, size)]
    else:
        pairs = [(0, i) for i in range(1, size)]
    return Graph.from_edges(size, [(u, v, 1.0) for u, v in pairs])


def support_graph(k: Kernel) -> Graph:
    """Unit-weight undirected graph on the jump support of a kernel."""
    q = k.rates
    off = (q > 0) | (q.T > 0)
    np.fill_diagonal(off, False)
    rows, cols = np.nonzero(np.triu(off, 1))
    return Graph.from_edges(k.size, [(int(u), int(v), 1.0) for u, v in zip(rows, cols)])


def resolve_graph(cfg: GraphSource) -> Graph:
    """Load, generate or build the graph an experiment document names; it must be connected."""
    if cfg.graph_path is not None:
        g = load_edge_list(cfg.graph_path, cfg.index_base, cfg.symmetrize)
    elif cfg.synthetic is not None:
        g = random_connected_graph(cfg.synthetic.nodes, cfg.synthetic.edges, derive_rng(cfg.synthetic.seed))
    elif cfg.family is not None:
        g = family_graph(cfg.family.name, cfg.family.size)
    else:
        g = support_graph(load_kernel_document(cfg.dtmc_path))
    require_connected(g, "experiment")
    return g


def build_kernel(kind: KernelKind, g: Graph, dtmc_path: Optional[str] = None) -> Kernel:
    if kind == KernelKind.COMBINATORIAL:
        return combinatorial_kernel(g)
    if kind == KernelKind.RANDOM_WALK:
        return random_walk_kernel(g)
    if dtmc_path is None:
        raise DomainError("kernel_kind dtmc_file needs dtmc_path")
    k = load_kernel_document(dtmc_path)
    if k.size != g.node_count:
        raise DomainError(f"kernel of size {k.size} against a graph with {g.node_count} nodes")
    return k


# =============================================================================
# SCHEDULES
# =============================================================================

def preset_entries(name: str) -> List[RemovalEntry]:
    if name not in PRESET_SCHEDULES:
        raise DomainError(f"unknown schedule preset {name!r}; known: {', '.join(sorted(PRESET_SCHEDULES))}")
    return [RemovalEntry(time=t, count=c) for t, c in PRESET_SCHEDULES[name]]


def build_dynamic_schedule(
    entries: Sequence[RemovalEntry],
    g: Graph,
    master_seed: int = 0,
    horizon: Optional[float] = None,
) -> DynamicSchedule:
    """
    Resolve every removal into explicit original labels.

    Random counts are drawn once, on the topology left by the earlier
    removals, from the schedule stream of master_seed. Explicit sets are
    checked to exist and to keep the graph connected.

    Raises:
        DomainError: times out of order, beyond the horizon or unknown labels
        DisconnectedGraphError: an explicit removal disconnects the graph
        ExhaustionError: no connectivity-preserving random set was found
    """
    rng = derive_rng(master_seed, 0, SCHEDULE_STREAM)
    current = g
    removals: List[ScheduledRemoval] = []
    last = 0.0
    for entry in entries:
        if entry.time <= last:
            raise DomainError("schedule times must be strictly increasing and positive")
        if horizon is not None and entry.time > horizon:
            raise DomainError(f"schedule time {entry.time} lies beyond T = {horizon}")
        last = entry.time
        if entry.count is not None:
            chosen = sample_removable_set(current, entry.count, rng)
        else:
            chosen = NodeSet.of([current.index_of_label(label) for label in entry.nodes], current.node_count)
            if len(chosen) >= current.node_count:
                raise DomainError(f"removal at t = {entry.time} would remove every remaining node")
        reduced = remove_nodes(current, chosen)
        if not is_connected(reduced):
            raise DisconnectedGraphError(f"removal at t = {entry.time} disconnects the graph")
        labels = tuple(sorted(current.node_labels[i] for i in chosen))
        removals.append(ScheduledRemoval(float(entry.time), labels))
        current = reduced
    schedule = DynamicSchedule(tuple(removals), g.node_count)
    if removals:
        logger.info(
            "schedule_resolved",
            removals=len(removals),
            removed=schedule.removed_count,
            fraction=round(schedule.cumulative_fraction, 6),
        )
    return schedule


def schedule_entries(cfg: ExperimentConfig) -> List[RemovalEntry]:
    return preset_entries(cfg.preset) if cfg.preset else list(cfg.schedule)


def epoch_graphs(g: Graph, schedule: DynamicSchedule) -> List[Graph]:
    graphs = [g]
    for removal in schedule.removals:
        current = graphs[-1]
        indices = NodeSet.of([current.index_of_label(label) for label in removal.labels], current.node_count)
        graphs.append(remove_nodes(current, indices))
    return graphs


# =============================================================================
# ESTIMATOR EXPERIMENTS
# =============================================================================

@dataclass(frozen=True)
class EpochReference:
    """Oracle Fiedler pair of one topology epoch."""

    start: float
    kernel: Kernel
    lambda2: float
    vector: np.ndarray
    eigenspace: np.ndarray
    degenerate: bool
    warning: Optional[str] = None


def epoch_references(g: Graph, k: Kernel, schedule: DynamicSchedule) -> List[EpochReference]:
    """One reference per topology epoch, computed exactly once."""
    starts = [0.0] + [r.time for r in schedule.removals]
    refs = []
    kernel = k
    for epoch, (start, graph) in enumerate(zip(starts, epoch_graphs(g, schedule))):
        if epoch > 0:
            kernel = rebuild_for_graph(kernel, graph)
        result = fiedler(kernel)
        logger.info("epoch_reference", epoch=epoch, start=start, nodes=graph.node_count, lambda2=result.value)
        refs.append(
            EpochReference(
                start=start,
                kernel=kernel,
                lambda2=result.value,
                vector=result.vector,
                eigenspace=result.eigenspace,
                degenerate=result.degenerate,
                warning=result.warning,
            )
        )
    return refs


def _metrics(z: np.ndarray, ref: EpochReference) -> Tuple[float, float]:
    """(RQ, CS) of z against the epoch reference; NaN for a vanishing z."""
    try:
        rq = rayleigh_quotient(z, ref.kernel)
        if ref.degenerate:
            cs = eigenspace_similarity(z, ref.eigenspace, ref.kernel)
        else:
            cs = cosine_similarity(z, ref.vector, ref.kernel)
    except DegenerateInputError:
        return math.nan, math.nan
    return rq, cs


@dataclass(frozen=True)
class RunTask:
    graph: Graph
    kernel: Kernel
    n: int
    kappa: float
    horizon: float
    master_seed: int
    run_index: int
    sample_times: Tuple[float, ...]
    schedule: DynamicSchedule
    references: Tuple[EpochReference, ...]
    init: Any = UNIFORM
    instantaneous: bool = False


@dataclass
class RunResult:
    run_index: int
    rq: np.ndarray
    cs: np.ndarray
    rq_inst: Optional[np.ndarray]
    cs_inst: Optional[np.ndarray]
    event_count: int
    fallbacks: List[Tuple[float, Tuple[str, ...]]] = field(default_factory=list)


def simulate_run(task: RunTask) -> RunResult:
    """One seeded run scored at every sample time (top level so worker processes can import it)."""
    traj = run(
        task.graph,
        task.kernel,
        task.n,
        task.kappa,
        task.horizon,
        derive_rng(task.master_seed, task.run_index),
        schedule=task.schedule,
        sample_grid=task.sample_times,
        init=task.init,
        record_events=task.instantaneous,
    )
    size = len(task.sample_times)
    rq, cs = np.empty(size), np.empty(size)
    rq_inst = np.empty(size) if task.instantaneous else None
    cs_inst = np.empty(size) if task.instantaneous else None
    for i, t in enumerate(task.sample_times):
        ref = task.references[traj.epoch_at(t)]
        rq[i], cs[i] = _metrics(estimator_z_hat(traj, t), ref)
        if task.instantaneous:
            X, Y = traj.state_at(t)
            rq_inst[i], cs_inst[i] = _metrics((X - Y) / task.n, ref)
    fallbacks = [
        (r.time, tuple(w.value for w in r.fallback_types)) for r in traj.removals if r.fallback_types
    ]
    logger.debug("run_scored", run=task.run_index, events=traj.event_count, final_cs=float(cs[-1]))
    return RunResult(task.run_index, rq, cs, rq_inst, cs_inst, traj.event_count, fallbacks)


def _fan_out(fn: Callable, tasks: Sequence, jobs: int) -> List:
    """Map fn over tasks, keeping task order whatever the worker scheduling."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


@dataclass
class MetricSeries:
    """
    Per-run RQ / CS of the time-averaged estimator at every sample time.

    rq and cs are (runs, times) arrays; the means are recomputed from them.
    """

    times: np.ndarray
    epochs: np.ndarray
    lambda2: np.ndarray
    rq: np.ndarray
    cs: np.ndarray
    rq_inst: Optional[np.ndarray] = None
    cs_inst: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def runs(self) -> int:
        return self.rq.shape[0]

    @property
    def rq_mean(self) -> np.ndarray:
        return self.rq.mean(axis=0)

    @property
    def cs_mean(self) -> np.ndarray:
        return self.cs.mean(axis=0)

    @property
    def warnings(self) -> List[str]:
        return list(self.metadata.get("warnings", []))

    def row_at(self, t: float) -> int:
        matches = np.flatnonzero(np.isclose(self.times, t, rtol=0.0, atol=1e-9))
        if matches.size == 0:
            raise DomainError(f"t = {t} is not a sample time")
        return int(matches[0])


def _initial_state(cfg: ExperimentConfig, g: Graph):
    if cfg.init is None:
        return UNIFORM
    if len(cfg.init.X) != g.node_count or len(cfg.init.Y) != g.node_count:
        raise DomainError(f"explicit initial counts must have {g.node_count} entries")
    return ExplicitInit(tuple(cfg.init.X), tuple(cfg.init.Y))


def run_experiment(cfg: ExperimentConfig, jobs: Optional[int] = None) -> MetricSeries:
    """
    Run cfg.runs independent simulations and score the estimator.

    Every run uses its own stream derived from (master_seed, run index); the
    removal schedule is resolved once and shared by all runs.

    Args:
        cfg: Validated experiment document
        jobs: Worker processes, defaults to the jobs setting

    Returns:
        MetricSeries with per-run and mean columns
    """
    jobs = jobs or get_settings().jobs
    g = resolve_graph(cfg)
    k = build_kernel(cfg.kernel_kind, g, cfg.dtmc_path)
    times = tuple(cfg.resolved_sample_times())
    schedule = build_dynamic_schedule(schedule_entries(cfg), g, cfg.master_seed, cfg.T)
    refs = epoch_references(g, k, schedule)
    init = _initial_state(cfg, g)

    tasks = [
        RunTask(
            graph=g,
            kernel=k,
            n=cfg.n,
            kappa=cfg.kappa,
            horizon=cfg.T,
            master_seed=cfg.master_seed,
            run_index=i,
            sample_times=times,
            schedule=schedule,
            references=tuple(refs),
            init=init,
            instantaneous=cfg.instantaneous,
        )
        for i in range(cfg.runs)
    ]
    logger.info("experiment_started", runs=cfg.runs, n=cfg.n, kappa=cfg.kappa, T=cfg.T, nodes=g.node_count, jobs=jobs)
    results = _fan_out(simulate_run, tasks, jobs)

    starts = [ref.start for ref in refs]
    epochs = np.array([_epoch_of(t, starts) for t in times], dtype=int)
    warnings = sorted({ref.warning for ref in refs if ref.warning})
    fallbacks = [
        {"run": r.run_index, "time": t, "types": list(types)} for r in results for t, types in r.fallbacks
    ]
    for item in fallbacks:
        warnings.append(f"run {item['run']}: no surviving {'/'.join(item['types'])} walker at t = {item['time']}")

    # replayable from the header alone: random removals are written back as explicit labels
    replay = cfg.model_copy(
        update={
            "preset": None,
            "schedule": [RemovalEntry(time=r.time, nodes=list(r.labels)) for r in schedule.removals],
        }
    )
    metadata = {
        "command": "dynamic" if schedule.removals else "simulate",
        "config": json.loads(replay.model_dump_json(exclude_none=True)),
        "preset": cfg.preset,
        "nodes": g.node_count,
        "edges": g.edge_count,
        "removed_fraction": schedule.cumulative_fraction,
        "epoch_lambda2": [ref.lambda2 for ref in refs],
        "epoch_starts": starts,
        "events": int(sum(r.event_count for r in results)),
        "warnings": warnings,
    }
    series = MetricSeries(
        times=np.array(times),
        epochs=epochs,
        lambda2=np.array([refs[e].lambda2 for e in epochs]),
        rq=np.vstack([r.rq for r in results]),
        cs=np.vstack([r.cs for r in results]),
        rq_inst=np.vstack([r.rq_inst for r in results]) if cfg.instantaneous else None,
        cs_inst=np.vstack([r.cs_inst for r in results]) if cfg.instantaneous else None,
        metadata=metadata,
    )
    logger.info("experiment_complete", runs=cfg.runs, final_cs_mean=float(series.cs_mean[-1]))
    return series


def _epoch_of(t: float, starts: Sequence[float]) -> int:
    # a sample at a removal time sees the new topology
    return int(np.searchsorted(np.asarray(starts), t, side="right")) - 1


def run_sweep(
    cfg: ExperimentConfig,
    n_values: Iterable[int] = SWEEP_N_VALUES,
    kappa_values: Iterable[float] = SWEEP_KAPPA_VALUES,
    jobs: Optional[int] = None,
) -> List[MetricSeries]:
    """One experiment per (n, kappa), in row-major order over n then kappa."""
    out = []
    for n in n_values:
        for kappa in kappa_values:
            variant = ExperimentConfig.model_validate({**cfg.model_dump(), "n": n, "kappa": kappa})
            series = run_experiment(variant, jobs)
            series.metadata["sweep"] = {"n": n, "kappa": kappa}
            out.append(series)
    return out


# =============================================================================
# PROCESS VS FLUID LIMIT
# =============================================================================

@dataclass(frozen=True)
class DeviationTask:
    graph: Graph
    kernel: Kernel
    n: int
    kappa: float
    horizon: float
    master_seed: int
    run_index: int
    X0: Tuple[int, ...]
    Y0: Tuple[int, ...]
    grid: Tuple[float, ...]
    ode: OdeTrajectory


def deviation_run(task: DeviationTask) -> float:
    traj = run(
        task.graph,
        task.kernel,
        task.n,
        task.kappa,
        task.horizon,
        derive_rng(task.master_seed, task.run_index),
        sample_grid=[t for t in task.grid if t > 0],
        init=ExplicitInit(task.X0, task.Y0),
    )
    return sup_deviation(traj, task.ode, task.grid)


@dataclass
class DeviationRow:
    n: int
    deviations: np.ndarray  # one sup-deviation per seed
    bound: DeviationBound

    @property
    def median(self) -> float:
        return float(np.median(self.deviations))


@dataclass
class DeviationReport:
    rows: List[DeviationRow]
    M: float
    M_estimated: bool
    epsilon: float
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def medians(self) -> List[float]:
        return [row.median for row in self.rows]


def _shared_counts(n: int, density: np.ndarray, name: str) -> Tuple[int, ...]:
    scaled = n * density
    counts = np.rint(scaled)
    if np.max(np.abs(scaled - counts)) > 1e-9:
        raise DomainError(f"n = {n} times the initial {name} density is not integral")
    return tuple(int(c) for c in counts)


def compare_sim_vs_ode(cfg: CompareConfig, jobs: Optional[int] = None) -> DeviationReport:
    """
    Sup-deviation of the density process from its fluid limit across n.

    Every run of every n starts from the same densities; run i of the j-th n
    value uses stream index j * seeds + i.
    """
    jobs = jobs or get_settings().jobs
    g = resolve_graph(cfg)
    k = build_kernel(cfg.kernel_kind, g, cfg.dtmc_path)
    x0 = np.array(cfg.initial.x)
    y0 = np.array(cfg.initial.y)
    if x0.size != g.node_count:
        raise DomainError(f"initial densities have {x0.size} entries against {g.node_count} nodes")
    grid = tuple(float(t) for t in np.linspace(0.0, cfg.T, cfg.grid_points))
    ode = integrate(x0, y0, k, cfg.kappa, cfg.T, cfg.dt_max)

    if cfg.M is not None:
        M, estimated = cfg.M, False
    else:
        M = estimate_lipschitz_M(k, cfg.kappa, cfg.lipschitz_samples, derive_rng(cfg.master_seed, 0, INIT_STREAM)).value
        estimated = True

    rows = []
    for j, n in enumerate(cfg.n_values):
        X0 = _shared_counts(n, x0, "x")
        Y0 = _shared_counts(n, y0, "y")
        tasks = [
            DeviationTask(g, k, n, cfg.kappa, cfg.T, cfg.master_seed, j * cfg.seeds + s, X0, Y0, grid, ode)
            for s in range(cfg.seeds)
        ]
        deviations = np.array(_fan_out(deviation_run, tasks, jobs))
        bound = deviation_bound(
            DeviationBoundInputs(n=n, kappa=cfg.kappa, N=g.node_count, T=cfg.T, epsilon=cfg.epsilon, M=M)
        )
        row = DeviationRow(n, deviations, bound)
        logger.info("deviation_measured", n=n, median=row.median, bound=bound.probability, log_bound=bound.log_raw)
        rows.append(row)

    metadata = {
        "command": "compare",
        "config": json.loads(cfg.model_dump_json(exclude_none=True)),
        "nodes": g.node_count,
        "ode_dt": ode.dt,
        "ode_max_mass_drift": ode.max_mass_drift,
        "warnings": [],
    }
    return DeviationReport(rows, M, estimated, cfg.epsilon, metadata)


# =============================================================================
# SINGLE TRAJECTORIES
# =============================================================================

def trace_run(cfg: ExperimentConfig, run_index: int = 0) -> Tuple[Trajectory, List[Tuple[float, float, float]]]:
    """
    Replay one run of an experiment with its full event log.

    Returns the trajectory and its (t, RQ, CS) samples; the stream is the one
    run_experiment gives to the same run index.
    """
    if not 0 <= run_index < cfg.runs:
        raise DomainError(f"run index {run_index} outside [0, {cfg.runs})")
    g = resolve_graph(cfg)
    k = build_kernel(cfg.kernel_kind, g, cfg.dtmc_path)
    schedule = build_dynamic_schedule(schedule_entries(cfg), g, cfg.master_seed, cfg.T)
    refs = epoch_references(g, k, schedule)
    times = cfg.resolved_sample_times()
    traj = run(
        g,
        k,
        cfg.n,
        cfg.kappa,
        cfg.T,
        derive_rng(cfg.master_seed, run_index),
        schedule=schedule,
        sample_grid=times,
        init=_initial_state(cfg, g),
        record_events=True,
    )
    samples = []
    for t in times:
        rq, cs = _metrics(estimator_z_hat(traj, t), refs[traj.epoch_at(t)])
        samples.append((t, rq, cs))
    return traj, samples


@dataclass(frozen=True)
class OccupationTask:
    graph: Graph
    kernel: Kernel
    n: int
    kappa: float
    horizon: float
    master_seed: int
    run_index: int
    center: np.ndarray
    radius: float
    window: Tuple[float, float]
    init: Any = UNIFORM


def occupation_run(task: OccupationTask) -> Tuple[float, Optional[float]]:
    """(occupation fraction, exit time) of one seeded run's instantaneous path."""
    traj = run(
        task.graph,
        task.kernel,
        task.n,
        task.kappa,
        task.horizon,
        derive_rng(task.master_seed, task.run_index),
        init=task.init,
        record_events=True,
    )
    fraction = occupation_fraction(traj, task.center, task.radius, task.window, task.kernel)
    leaves = exit_time(traj, task.center, task.radius, task.kernel)
    logger.debug("occupation_scored", run=task.run_index, fraction=fraction, exit_time=leaves)
    return fraction, leaves


@dataclass
class OccupationReport:
    """Per-run time share near the Fiedler direction, with the first exit from it."""

    fractions: np.ndarray
    exit_times: List[Optional[float]]
    radius: float
    window: Tuple[float, float]
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def runs(self) -> int:
        return int(self.fractions.size)

    @property
    def mean_fraction(self) -> float:
        return float(self.fractions.mean())


def occupation_study(
    cfg: ExperimentConfig,
    radius: float = DEFAULT_OCCUPATION_RADIUS,
    burn_in: float = 0.0,
    jobs: Optional[int] = None,
) -> OccupationReport:
    """
    Score how long each run's instantaneous path stays near the oracle Fiedler vector.

    The neighborhood is CS(z, v2) >= 1 - radius; the fraction is taken over
    [burn_in, T] and the exit time over the whole run. Run i uses the same
    stream run_experiment gives to run i.
    """
    if cfg.schedule or cfg.preset:
        raise DomainError("occupation statistics need a static graph; drop schedule and preset")
    if not 0.0 <= radius <= 1.0:
        raise DomainError(f"radius must lie in [0, 1], got {radius}")
    if not 0.0 <= burn_in < cfg.T:
        raise DomainError(f"burn-in must lie in [0, {cfg.T}), got {burn_in}")
    jobs = jobs or get_settings().jobs
    g = resolve_graph(cfg)
    k = build_kernel(cfg.kernel_kind, g, cfg.dtmc_path)
    ref = fiedler(k)
    window = (burn_in, cfg.T)
    init = _initial_state(cfg, g)

    tasks = [
        OccupationTask(
            graph=g,
            kernel=k,
            n=cfg.n,
            kappa=cfg.kappa,
            horizon=cfg.T,
            master_seed=cfg.master_seed,
            run_index=i,
            center=ref.vector,
            radius=radius,
            window=window,
            init=init,
        )
        for i in range(cfg.runs)
    ]
    logger.info("occupation_started", runs=cfg.runs, n=cfg.n, kappa=cfg.kappa, radius=radius, burn_in=burn_in)
    results = _fan_out(occupation_run, tasks, jobs)

    report = OccupationReport(
        fractions=np.array([fraction for fraction, _ in results]),
        exit_times=[leaves for _, leaves in results],
        radius=radius,
        window=window,
    )
    report.metadata = {
        "command": "occupation",
        "config": json.loads(cfg.model_dump_json(exclude_none=True)),
        "nodes": g.node_count,
        "lambda2": ref.value,
        "radius": radius,
        "window": list(window),
        "mean_fraction": report.mean_fraction,
        "warnings": [ref.warning] if ref.warning else [],
    }
    logger.info("occupation_complete", runs=report.runs, mean_fraction=report.mean_fraction)
    return report


def ode_initial_condition(cfg: OdeConfig, size: int) -> Tuple[np.ndarray, np.ndarray]:
    if cfg.initial is not None:
        x0, y0 = np.array(cfg.initial.x), np.array(cfg.initial.y)
        if x0.size != size:
            raise DomainError(f"initial densities have {x0.size} entries against {size} nodes")
        return x0, y0
    z = derive_rng(cfg.seed, 0, INIT_STREAM).standard_normal(size)
    return embed_direction(z - z.mean(), cfg.margin)


def solve_ode(cfg: OdeConfig) -> Tuple[OdeTrajectory, FiedlerResult]:
    """Integrate the fluid limit and return it with the oracle Fiedler pair of its kernel."""
    g = resolve_graph(cfg)
    k = build_kernel(cfg.kernel_kind, g, cfg.dtmc_path)
    x0, y0 = ode_initial_condition(cfg, k.size)
    traj = integrate(x0, y0, k, cfg.kappa, cfg.T, cfg.dt_max)
    return traj, fiedler(k)
