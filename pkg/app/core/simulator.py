"""
Exact event-driven simulation of the two-group interacting walker process.

Core logic for:
- Walker occupancy state (X, Y) and its densities
- Incremental event-rate bookkeeping with periodic from-scratch resync
- Gillespie steps: walk moves and kill-and-redistribute events
- Runs with sample checkpoints, dynamic node removals and running time integrals
- Time-averaged estimators and occupation / exit statistics of the instantaneous path
"""

import bisect
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import get_settings
from app.core.errors import DisconnectedGraphError, DomainError, NumericFailure
from app.core.graph import Graph, NodeSet, is_connected, remove_nodes, require_connected
from app.core.kernel import EuclideanInnerProduct, Kernel, rebuild_for_graph
from app.core.logs import get_logger
from app.core.utils import CumulativeTable, as_rng, strictly_increasing

logger = get_logger(__name__)


class WalkerType(str, Enum):
    X = "x"
    Y = "y"


class EventKind(str, Enum):
    WALK = "walk"  # a walker follows the kernel
    KILL = "kill"  # a walker is killed by the other group and redistributed


class Event(NamedTuple):
    time: float
    kind: EventKind
    walker_type: WalkerType
    source: int
    target: int


class ExplicitInit(NamedTuple):
    X: Sequence[int]
    Y: Sequence[int]


UNIFORM = "uniform"


# =============================================================================
# STATE
# =============================================================================

@dataclass
class WalkerState:
    """Per-node walker counts of both groups."""

    X: np.ndarray
    Y: np.ndarray
    n: int
    kappa: float
    clock: float = 0.0
    fallback_types: Tuple[WalkerType, ...] = ()

    def __post_init__(self):
        self.X = np.array(self.X, dtype=np.int64)
        self.Y = np.array(self.Y, dtype=np.int64)
        self.validate()

    def validate(self) -> None:
        if self.n < 1:
            raise DomainError("each group needs at least one walker")
        if self.kappa < 0 or not np.isfinite(self.kappa):
            raise DomainError(f"kappa must be a finite non-negative number, got {self.kappa}")
        if self.X.ndim != 1 or self.X.shape != self.Y.shape:
            raise DomainError("X and Y must be vectors of equal length")
        if np.any(self.X < 0) or np.any(self.Y < 0):
            raise DomainError("walker counts must be non-negative")
        if int(self.X.sum()) != self.n or int(self.Y.sum()) != self.n:
            raise DomainError(f"counts sum to ({int(self.X.sum())}, {int(self.Y.sum())}), expected n = {self.n}")

    @property
    def node_count(self) -> int:
        return self.X.size

    @property
    def x(self) -> np.ndarray:
        return self.X / self.n

    @property
    def y(self) -> np.ndarray:
        return self.Y / self.n

    @property
    def z(self) -> np.ndarray:
        return (self.X - self.Y) / self.n

    def counts(self, walker_type: WalkerType) -> np.ndarray:
        return self.X if walker_type == WalkerType.X else self.Y

    def copy(self) -> "WalkerState":
        return WalkerState(self.X.copy(), self.Y.copy(), self.n, self.kappa, self.clock, self.fallback_types)

    def majority_partition(self) -> NodeSet:
        """Nodes where type-x walkers outnumber type-y walkers."""
        return NodeSet.of(np.flatnonzero(self.X > self.Y).tolist(), self.node_count)


def init_state(
    g: Graph,
    n: int,
    kappa: float,
    init: Union[str, ExplicitInit] = UNIFORM,
    rng=None,
) -> WalkerState:
    """
    Place both groups of n walkers on g.

    Args:
        g: Connected graph
        n: Walkers per group
        kappa: Interaction strength (0 gives independent walkers)
        init: "uniform" (i.i.d. uniform nodes) or ExplicitInit(X, Y)
        rng: Generator or integer seed, required for uniform placement

    Returns:
        WalkerState at clock 0
    """
    require_connected(g, "walker initialization")
    if n < 1:
        raise DomainError("each group needs at least one walker")
    if isinstance(init, ExplicitInit) or (isinstance(init, tuple) and len(init) == 2):
        X, Y = init
        if len(X) != g.node_count or len(Y) != g.node_count:
            raise DomainError(f"explicit counts must have {g.node_count} entries")
        return WalkerState(np.asarray(X), np.asarray(Y), n, kappa)
    if init != UNIFORM:
        raise DomainError(f"unknown initialization {init!r}")
    if rng is None:
        raise DomainError("uniform initialization needs a random stream")
    rng = as_rng(rng)
    X = np.bincount(rng.integers(0, g.node_count, size=n), minlength=g.node_count)
    Y = np.bincount(rng.integers(0, g.node_count, size=n), minlength=g.node_count)
    return WalkerState(X, Y, n, kappa)


def kill_rates(state: WalkerState) -> np.ndarray:
    """Per-node rate (kappa/n) X_j Y_j at which a walker of either given group is killed."""
    return state.kappa / state.n * (state.X * state.Y)


# =============================================================================
# RATE BOOKKEEPING
# =============================================================================

class KernelSampler:
    """Per-node jump targets with cumulative weights for binary-search sampling."""

    def __init__(self, k: Kernel):
        self.targets: List[List[int]] = []
        self.cumulative: List[List[float]] = []
        for j in range(k.size):
            row = k.rates[j].copy()
            row[j] = 0.0
            targets = np.flatnonzero(row > 0)
            self.targets.append(targets.tolist())
            self.cumulative.append(np.cumsum(row[targets]).tolist())

    def draw(self, j: int, u: float) -> int:
        cumulative = self.cumulative[j]
        if not cumulative:
            raise NumericFailure(f"node {j} has no outgoing rates")
        idx = bisect.bisect_right(cumulative, u * cumulative[-1])
        return self.targets[j][min(idx, len(cumulative) - 1)]


class EventRateTable:
    """
    Walk and kill rates per node with cached totals.

    Totals are updated incrementally and compared against a from-scratch
    recomputation by resync(). Cumulative tables over walk rates, pair
    counts and walker counts are kept alongside for O(log N) sampling.
    """

    def __init__(self, state: WalkerState, exit_rates: np.ndarray):
        self.exit_rates = np.asarray(exit_rates, dtype=float)
        self.kill_scale = state.kappa / state.n
        self.walk_x = self.exit_rates * state.X
        self.walk_y = self.exit_rates * state.Y
        self.pairs = state.X * state.Y
        self.total_walk_x = float(self.walk_x.sum())
        self.total_walk_y = float(self.walk_y.sum())
        self.total_pairs = int(self.pairs.sum())
        self.walk_tables = {
            WalkerType.X: CumulativeTable(self.walk_x),
            WalkerType.Y: CumulativeTable(self.walk_y),
        }
        self.pair_table = CumulativeTable(self.pairs)
        self.count_tables = {
            WalkerType.X: CumulativeTable(state.X),
            WalkerType.Y: CumulativeTable(state.Y),
        }

    @property
    def kill_rate(self) -> np.ndarray:
        return self.kill_scale * self.pairs

    @property
    def total_kill(self) -> float:
        # both groups lose a walker at node j with rate (kappa/n) X_j Y_j
        return 2.0 * self.kill_scale * self.total_pairs

    @property
    def total_rate(self) -> float:
        return self.total_walk_x + self.total_walk_y + self.total_kill

    def update(self, state: WalkerState, node: int) -> None:
        rate = self.exit_rates[node]
        new_x = rate * state.X[node]
        new_y = rate * state.Y[node]
        new_pairs = int(state.X[node] * state.Y[node])
        self.total_walk_x += new_x - self.walk_x[node]
        self.total_walk_y += new_y - self.walk_y[node]
        self.total_pairs += new_pairs - int(self.pairs[node])
        self.walk_x[node] = new_x
        self.walk_y[node] = new_y
        self.pairs[node] = new_pairs
        self.walk_tables[WalkerType.X].set(node, float(new_x))
        self.walk_tables[WalkerType.Y].set(node, float(new_y))
        self.pair_table.set(node, new_pairs)
        self.count_tables[WalkerType.X].set(node, int(state.X[node]))
        self.count_tables[WalkerType.Y].set(node, int(state.Y[node]))

    def resync(self, tolerance: float) -> float:
        """Replace cached totals by fresh sums; returns the relative drift found."""
        fresh_x = float(self.walk_x.sum())
        fresh_y = float(self.walk_y.sum())
        fresh_pairs = int(self.pairs.sum())
        scale = max(1.0, fresh_x + fresh_y)
        drift = (abs(fresh_x - self.total_walk_x) + abs(fresh_y - self.total_walk_y)) / scale
        if fresh_pairs != self.total_pairs:
            raise NumericFailure(f"pair count drifted: cached {self.total_pairs}, actual {fresh_pairs}")
        if drift > tolerance:
            raise NumericFailure(f"walk-rate totals drifted by {drift:.3e} (tolerance {tolerance:.1e})")
        self.total_walk_x, self.total_walk_y = fresh_x, fresh_y
        # float tables accumulate round-off through their deltas
        self.walk_tables = {
            WalkerType.X: CumulativeTable(self.walk_x),
            WalkerType.Y: CumulativeTable(self.walk_y),
        }
        return drift


# =============================================================================
# SIMULATOR
# =============================================================================

class Simulator:
    """
    Gillespie engine for one topology epoch.

    Owns the state, the kernel sampler, the rate table and the running
    integrals of X and Y (accumulated lazily per node).
    """

    def __init__(
        self,
        state: WalkerState,
        kernel: Kernel,
        rng: np.random.Generator,
        integral_x: Optional[np.ndarray] = None,
        integral_y: Optional[np.ndarray] = None,
        check_invariants: bool = False,
    ):
        if kernel.size != state.node_count:
            raise DomainError(f"kernel of size {kernel.size} against a state on {state.node_count} nodes")
        settings = get_settings()
        self.state = state
        self.kernel = kernel
        self.rng = rng
        self.sampler = KernelSampler(kernel)
        self.table = EventRateTable(state, kernel.exit_rates)
        self.check_invariants = check_invariants
        self.resync_interval = settings.resync_interval
        self.resync_tolerance = settings.resync_tolerance
        self.events_since_resync = 0
        self.event_count = 0

        size = state.node_count
        self.integral_x = np.zeros(size) if integral_x is None else np.array(integral_x, dtype=float)
        self.integral_y = np.zeros(size) if integral_y is None else np.array(integral_y, dtype=float)
        self._last_x = np.full(size, state.clock)
        self._last_y = np.full(size, state.clock)

    @property
    def rate_table(self) -> EventRateTable:
        return self.table

    def waiting_time(self) -> float:
        total = self.table.total_rate
        if not total > 0:
            raise NumericFailure("total event rate is zero")
        return float(self.rng.exponential(1.0 / total))

    def choose_event(self, time: float) -> Event:
        """Sample the next event (not applied) from the current rates."""
        table = self.table
        u = self.rng.random() * table.total_rate
        if table.total_pairs == 0 or u < table.total_walk_x + table.total_walk_y:
            walker_type = WalkerType.X if u < table.total_walk_x else WalkerType.Y
            weights = table.walk_tables[walker_type]
            source = weights.find(self.rng.random() * weights.total)
            target = self.sampler.draw(source, self.rng.random())
            return Event(time, EventKind.WALK, walker_type, source, target)

        source = table.pair_table.find(int(self.rng.integers(table.total_pairs)))
        walker_type = WalkerType.X if self.rng.random() < 0.5 else WalkerType.Y
        # the victim reappears on the node of a uniformly chosen walker of its own group
        target = table.count_tables[walker_type].find(int(self.rng.integers(self.state.n)))
        return Event(time, EventKind.KILL, walker_type, source, target)

    def _accumulate(self, walker_type: WalkerType, node: int, time: float) -> None:
        if walker_type == WalkerType.X:
            self.integral_x[node] += self.state.X[node] * (time - self._last_x[node])
            self._last_x[node] = time
        else:
            self.integral_y[node] += self.state.Y[node] * (time - self._last_y[node])
            self._last_y[node] = time

    def apply(self, event: Event) -> None:
        state = self.state
        state.clock = event.time
        self.event_count += 1
        if event.source != event.target:
            counts = state.counts(event.walker_type)
            self._accumulate(event.walker_type, event.source, event.time)
            self._accumulate(event.walker_type, event.target, event.time)
            counts[event.source] -= 1
            counts[event.target] += 1
            self.table.update(state, event.source)
            self.table.update(state, event.target)
            if self.check_invariants:
                self._check_conservation(event)

        self.events_since_resync += 1
        if self.events_since_resync >= self.resync_interval:
            drift = self.table.resync(self.resync_tolerance)
            logger.debug("rate_table_resync", events=self.event_count, drift=drift)
            self.events_since_resync = 0

    def _check_conservation(self, event: Event) -> None:
        state = self.state
        counts = state.counts(event.walker_type)
        if counts[event.source] < 0 or int(state.X.sum()) != state.n or int(state.Y.sum()) != state.n:
            raise NumericFailure(f"walker conservation violated after {event}")

    def step(self) -> Tuple[float, Event]:
        dt = self.waiting_time()
        event = self.choose_event(self.state.clock + dt)
        self.apply(event)
        return dt, event

    def advance_clock(self, time: float) -> None:
        """Move the clock forward with no event (sample and removal boundaries)."""
        if time < self.state.clock:
            raise DomainError(f"cannot move the clock back from {self.state.clock} to {time}")
        self.state.clock = time

    def integrals(self) -> Tuple[np.ndarray, np.ndarray]:
        """Running integrals of X and Y up to the current clock."""
        now = self.state.clock
        self.integral_x += self.state.X * (now - self._last_x)
        self.integral_y += self.state.Y * (now - self._last_y)
        self._last_x[:] = now
        self._last_y[:] = now
        return self.integral_x.copy(), self.integral_y.copy()


def next_event(state: WalkerState, k: Kernel, rng) -> Tuple[float, Event]:
    """One Gillespie step applied to state in place; returns (dt, event)."""
    return Simulator(state, k, as_rng(rng)).step()


# =============================================================================
# DYNAMIC TOPOLOGY
# =============================================================================

@dataclass(frozen=True)
class ScheduledRemoval:
    time: float
    labels: Tuple[int, ...]  # original node labels, stable across removals


@dataclass(frozen=True)
class DynamicSchedule:
    removals: Tuple[ScheduledRemoval, ...]
    original_node_count: int

    def __post_init__(self):
        times = [r.time for r in self.removals]
        if not strictly_increasing(times):
            raise DomainError("removal times must be strictly increasing")
        if any(t <= 0 for t in times):
            raise DomainError("removal times must be positive")

    @property
    def removed_count(self) -> int:
        return sum(len(r.labels) for r in self.removals)

    @property
    def cumulative_fraction(self) -> float:
        return self.removed_count / self.original_node_count


def apply_node_removal(state: WalkerState, removed: NodeSet, g_new: Graph, rng) -> WalkerState:
    """
    Drop the removed nodes and relocate the walkers that stood on them.

    Each displaced walker lands on the node of a uniformly chosen surviving
    walker of its own group. When a group has no surviving walker its
    displaced walkers are spread uniformly over the surviving nodes and the
    group is listed in fallback_types.
    """
    rng = as_rng(rng)
    if removed.node_count != state.node_count:
        raise DomainError("removal set belongs to a graph of a different size")
    keep = removed.complement().members
    if len(keep) != g_new.node_count:
        raise DomainError(f"{len(keep)} surviving nodes against a new graph with {g_new.node_count}")
    if not is_connected(g_new):
        raise DisconnectedGraphError("node removal disconnects the graph")

    removed_idx = list(removed.members)
    fallback: List[WalkerType] = []
    new_counts: Dict[WalkerType, np.ndarray] = {}
    for walker_type in (WalkerType.X, WalkerType.Y):
        counts = state.counts(walker_type)
        survivors = counts[list(keep)].astype(np.int64)
        displaced = int(counts[removed_idx].sum()) if removed_idx else 0
        if displaced:
            total = int(survivors.sum())
            if total == 0:
                fallback.append(walker_type)
                survivors = survivors + np.bincount(
                    rng.integers(0, len(keep), size=displaced), minlength=len(keep)
                )
                logger.warning("removal_fallback", walker_type=walker_type.value, displaced=displaced)
            else:
                survivors = survivors + rng.multinomial(displaced, survivors / total)
        new_counts[walker_type] = survivors

    return WalkerState(
        new_counts[WalkerType.X],
        new_counts[WalkerType.Y],
        state.n,
        state.kappa,
        state.clock,
        tuple(fallback),
    )


# =============================================================================
# TRAJECTORY
# =============================================================================

@dataclass(frozen=True, eq=False)
class Checkpoint:
    time: float
    X: np.ndarray
    Y: np.ndarray
    integral_x: np.ndarray
    integral_y: np.ndarray
    epoch: int
    event_index: int  # number of recorded events before this checkpoint


@dataclass(frozen=True, eq=False)
class TopologyEpoch:
    start: float
    graph: Graph
    kernel: Kernel


@dataclass(frozen=True)
class RemovalRecord:
    time: float
    labels: Tuple[int, ...]
    fallback_types: Tuple[WalkerType, ...]


@dataclass(eq=False)
class Trajectory:
    """
    Piecewise record of one run.

    Checkpoints hold counts and exact running integrals at time 0, at every
    sample time, around every removal and at the horizon. With recorded
    events any time in (0, horizon] can be reconstructed by replay from the
    latest checkpoint.
    """

    n: int
    kappa: float
    horizon: float
    epochs: List[TopologyEpoch] = field(default_factory=list)
    checkpoints: List[Checkpoint] = field(default_factory=list)
    events: Optional[List[Event]] = None
    removals: List[RemovalRecord] = field(default_factory=list)
    event_count: int = 0

    @property
    def running_integral_x(self) -> np.ndarray:
        return self.checkpoints[-1].integral_x

    @property
    def running_integral_y(self) -> np.ndarray:
        return self.checkpoints[-1].integral_y

    @property
    def sample_times(self) -> List[float]:
        return [c.time for c in self.checkpoints]

    def epoch_at(self, t: float) -> int:
        return self._checkpoint_before(t).epoch

    def _checkpoint_before(self, t: float) -> Checkpoint:
        if not 0 <= t <= self.horizon:
            raise DomainError(f"t = {t} outside [0, {self.horizon}]")
        idx = bisect.bisect_right(self.sample_times, t) - 1
        return self.checkpoints[idx]

    def _replay(self, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        start = self._checkpoint_before(t)
        X, Y = start.X.copy(), start.Y.copy()
        int_x, int_y = start.integral_x.copy(), start.integral_y.copy()
        if start.time == t:
            return X, Y, int_x, int_y
        if self.events is None:
            raise DomainError(f"t = {t} is not a checkpoint; rerun with record_events to query it")
        cursor = start.time
        for event in self.events[start.event_index:]:
            if event.time > t:
                break
            int_x += X * (event.time - cursor)
            int_y += Y * (event.time - cursor)
            cursor = event.time
            counts = X if event.walker_type == WalkerType.X else Y
            counts[event.source] -= 1
            counts[event.target] += 1
        int_x += X * (t - cursor)
        int_y += Y * (t - cursor)
        return X, Y, int_x, int_y

    def state_at(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Counts (X, Y) at time t (right-continuous)."""
        X, Y, _, _ = self._replay(t)
        return X, Y

    def averages(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """(x_hat(t), y_hat(t)): time-averaged densities over the surviving nodes."""
        if t <= 0:
            raise DomainError("time averages are undefined at t = 0")
        _, _, int_x, int_y = self._replay(t)
        return int_x / int_x.sum(), int_y / int_y.sum()

    def x_hat(self, t: float) -> np.ndarray:
        return self.averages(t)[0]

    def y_hat(self, t: float) -> np.ndarray:
        return self.averages(t)[1]

    def instantaneous_segments(self) -> Iterator[Tuple[float, float, np.ndarray]]:
        """(start, end, z) pieces of the instantaneous path z(s) = (X - Y) / n over [0, horizon]."""
        if self.events is None:
            raise DomainError("instantaneous path needs recorded events")
        if len(self.epochs) > 1:
            raise DomainError("instantaneous statistics are defined on a single topology epoch")
        first = self.checkpoints[0]
        X, Y = first.X.copy(), first.Y.copy()
        cursor = 0.0
        for event in self.events:
            if event.source == event.target:
                continue
            if event.time > cursor:
                yield cursor, event.time, (X - Y) / self.n
            cursor = event.time
            counts = X if event.walker_type == WalkerType.X else Y
            counts[event.source] -= 1
            counts[event.target] += 1
        if self.horizon > cursor:
            yield cursor, self.horizon, (X - Y) / self.n


def estimator_z_hat(traj: Trajectory, t: float) -> np.ndarray:
    """z_hat(t) = x_hat(t) - y_hat(t)."""
    x_hat, y_hat = traj.averages(t)
    return x_hat - y_hat


# =============================================================================
# RUNS
# =============================================================================

def _checkpoint(traj: Trajectory, sim: Simulator, epoch: int) -> None:
    int_x, int_y = sim.integrals()
    traj.checkpoints.append(
        Checkpoint(
            time=sim.state.clock,
            X=sim.state.X.copy(),
            Y=sim.state.Y.copy(),
            integral_x=int_x,
            integral_y=int_y,
            epoch=epoch,
            event_index=len(traj.events) if traj.events is not None else 0,
        )
    )


def run(
    g: Graph,
    k: Kernel,
    n: int,
    kappa: float,
    horizon: float,
    seed,
    schedule: Optional[DynamicSchedule] = None,
    sample_grid: Sequence[float] = (),
    init: Union[str, ExplicitInit] = UNIFORM,
    record_events: bool = False,
    check_invariants: bool = False,
) -> Trajectory:
    """
    Simulate the walker process on [0, horizon].

    Args:
        g: Connected graph
        k: Kernel on g (graph-derived when a schedule is given)
        n: Walkers per group
        kappa: Interaction strength
        horizon: Final time T > 0
        seed: Integer seed or numpy Generator
        schedule: Node removals applied at their times
        sample_grid: Strictly increasing checkpoint times in (0, horizon]
        init: "uniform" or ExplicitInit(X, Y)
        record_events: Keep the full event log (needed for off-grid queries)
        check_invariants: Verify conservation after every event

    Returns:
        Trajectory
    """
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    grid = [float(t) for t in sample_grid]
    if not strictly_increasing(grid) or any(not 0 < t <= horizon for t in grid):
        raise DomainError("sample times must be strictly increasing within (0, T]")
    if k.size != g.node_count:
        raise DomainError(f"kernel of size {k.size} against a graph with {g.node_count} nodes")
    if schedule is not None and schedule.removals and schedule.removals[-1].time > horizon:
        raise DomainError("schedule extends beyond the horizon")

    rng = as_rng(seed)
    state = init_state(g, n, kappa, init, rng)
    traj = Trajectory(n=n, kappa=kappa, horizon=float(horizon), events=[] if record_events else None)
    traj.epochs.append(TopologyEpoch(0.0, g, k))
    sim = Simulator(state, k, rng, check_invariants=check_invariants)
    _checkpoint(traj, sim, 0)

    # (time, order, payload): removals before samples before the horizon at equal times
    marks: List[Tuple[float, int, object]] = []
    for removal in (schedule.removals if schedule is not None else ()):
        marks.append((removal.time, 0, removal))
    marks.extend((t, 1, None) for t in grid if t < horizon)
    marks.append((float(horizon), 2, None))
    marks.sort(key=lambda m: (m[0], m[1]))

    graph, kernel, epoch = g, k, 0
    mark_idx = 0
    while True:
        t_next = sim.state.clock + sim.waiting_time()
        interrupted = False
        while mark_idx < len(marks) and marks[mark_idx][0] <= t_next:
            time, order, payload = marks[mark_idx]
            mark_idx += 1
            sim.advance_clock(time)
            if order == 2:
                _checkpoint(traj, sim, epoch)
                traj.event_count += sim.event_count
                logger.debug("run_complete", events=traj.event_count, clock=time, epochs=epoch + 1)
                return traj
            if order == 1:
                _checkpoint(traj, sim, epoch)
                continue

            _checkpoint(traj, sim, epoch)
            int_x, int_y = sim.integrals()
            indices = NodeSet.of([graph.index_of_label(label) for label in payload.labels], graph.node_count)
            new_graph = remove_nodes(graph, indices)
            if not is_connected(new_graph):
                raise DisconnectedGraphError(f"removal of labels {payload.labels} at t = {time} disconnects the graph")
            new_state = apply_node_removal(sim.state, indices, new_graph, rng)
            keep = list(indices.complement().members)
            traj.event_count += sim.event_count
            graph, kernel, epoch = new_graph, rebuild_for_graph(kernel, new_graph), epoch + 1
            sim = Simulator(new_state, kernel, rng, int_x[keep], int_y[keep], check_invariants)
            traj.epochs.append(TopologyEpoch(time, graph, kernel))
            traj.removals.append(RemovalRecord(time, tuple(payload.labels), new_state.fallback_types))
            _checkpoint(traj, sim, epoch)
            # rates changed; the pending event is discarded and redrawn
            interrupted = True
            break
        if interrupted:
            continue
        event = sim.choose_event(t_next)
        sim.apply(event)
        if traj.events is not None:
            traj.events.append(event)


# =============================================================================
# OCCUPATION STATISTICS
# =============================================================================

def _in_neighborhood(z: np.ndarray, center: np.ndarray, radius: float, ip) -> bool:
    nz = ip.norm(z)
    similarity = 0.0 if nz == 0.0 else abs(ip.inner(z, center)) / (nz * ip.norm(center))
    return similarity >= 1.0 - radius


def occupation_fraction(
    traj: Trajectory,
    center: np.ndarray,
    radius: float,
    t_window: Optional[Tuple[float, float]] = None,
    kernel: Optional[Kernel] = None,
) -> float:
    """
    Fraction of the window spent with CS(z(s), center) >= 1 - radius.

    z(s) is the instantaneous difference of densities; z(s) = 0 counts as
    similarity 0.
    """
    center = np.asarray(center, dtype=float)
    ip = kernel.inner_product() if kernel is not None else EuclideanInnerProduct()
    if ip.norm(center) == 0.0:
        raise DomainError("neighborhood center must be nonzero")
    start, end = t_window if t_window is not None else (0.0, traj.horizon)
    if not 0 <= start < end <= traj.horizon:
        raise DomainError(f"window ({start}, {end}) outside [0, {traj.horizon}]")
    inside = 0.0
    for seg_start, seg_end, z in traj.instantaneous_segments():
        lo, hi = max(seg_start, start), min(seg_end, end)
        if hi > lo and _in_neighborhood(z, center, radius, ip):
            inside += hi - lo
    return inside / (end - start)


def exit_time(
    traj: Trajectory,
    center: np.ndarray,
    radius: float,
    kernel: Optional[Kernel] = None,
) -> Optional[float]:
    """First time the path leaves the neighborhood after having entered it; None otherwise."""
    center = np.asarray(center, dtype=float)
    ip = kernel.inner_product() if kernel is not None else EuclideanInnerProduct()
    if ip.norm(center) == 0.0:
        raise DomainError("neighborhood center must be nonzero")
    entered = False
    for seg_start, _, z in traj.instantaneous_segments():
        inside = _in_neighborhood(z, center, radius, ip)
        if inside:
            entered = True
        elif entered:
            return seg_start
    return None
