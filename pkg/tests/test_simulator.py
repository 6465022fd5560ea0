import os
import sys

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import stats

# Add project root to sys.path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from app.core.errors import DisconnectedGraphError, DomainError
from app.core.graph import NodeSet, remove_nodes
from app.core.kernel import combinatorial_kernel, random_walk_kernel
from app.core.simulator import (
    EventKind,
    ExplicitInit,
    ScheduledRemoval,
    DynamicSchedule,
    Simulator,
    WalkerState,
    WalkerType,
    apply_node_removal,
    estimator_z_hat,
    exit_time,
    init_state,
    kill_rates,
    next_event,
    occupation_fraction,
    run,
)
from app.core.utils import CumulativeTable, derive_rng
from strategies import connected_graphs


def assert_same_trajectory(a, b):
    assert a.event_count == b.event_count
    assert a.events == b.events
    assert len(a.checkpoints) == len(b.checkpoints)
    for ca, cb in zip(a.checkpoints, b.checkpoints):
        assert ca.time == cb.time
        np.testing.assert_array_equal(ca.X, cb.X)
        np.testing.assert_array_equal(ca.Y, cb.Y)
        np.testing.assert_array_equal(ca.integral_x, cb.integral_x)


# =============================================================================
# State
# =============================================================================

def test_uniform_init_places_n_walkers(two_communities):
    state = init_state(two_communities, 25, 10.0, rng=derive_rng(1))
    assert state.X.sum() == 25 and state.Y.sum() == 25
    assert state.node_count == 10
    np.testing.assert_allclose(state.z, state.x - state.y)


def test_explicit_init(p3):
    state = init_state(p3, 3, 1.0, ExplicitInit([3, 0, 0], [0, 0, 3]))
    np.testing.assert_array_equal(state.X, [3, 0, 0])
    assert state.majority_partition().members == (0,)


@pytest.mark.parametrize(
    "init, n",
    [
        (ExplicitInit([1, 1], [1, 1]), 2),
        (ExplicitInit([2, 0, 0], [1, 1, 1]), 3),
        (ExplicitInit([4, -1, 0], [1, 1, 1]), 3),
        ("corners", 3),
    ],
)
def test_init_validation(p3, init, n):
    with pytest.raises(DomainError):
        init_state(p3, n, 1.0, init, rng=0)


def test_uniform_init_needs_rng(p3):
    with pytest.raises(DomainError):
        init_state(p3, 3, 1.0)


def test_state_rejects_negative_kappa():
    with pytest.raises(DomainError):
        WalkerState(np.array([1, 0]), np.array([0, 1]), 1, -1.0)


def test_kill_rates():
    state = WalkerState(np.array([2, 1]), np.array([1, 3]), 3, 3.0)
    np.testing.assert_allclose(kill_rates(state), [2.0, 3.0])


# =============================================================================
# Single events
# =============================================================================

def test_next_event_conserves_walkers(two_communities):
    k = combinatorial_kernel(two_communities)
    state = init_state(two_communities, 10, 5.0, rng=derive_rng(2))
    rng = derive_rng(3)
    clock = 0.0
    for _ in range(500):
        dt, event = next_event(state, k, rng)
        assert dt > 0
        clock += dt
        assert event.time == pytest.approx(clock)
        assert state.X.sum() == 10 and state.Y.sum() == 10
        assert np.all(state.X >= 0) and np.all(state.Y >= 0)


def test_waiting_times_are_exponential(two_communities):
    state = init_state(two_communities, 20, 10.0, rng=derive_rng(4))
    sim = Simulator(state, combinatorial_kernel(two_communities), derive_rng(5))
    total = sim.rate_table.total_rate
    samples = np.array([sim.waiting_time() for _ in range(20_000)])
    result = stats.kstest(samples, "expon", args=(0.0, 1.0 / total))
    assert result.pvalue > 0.001


def test_event_categories_follow_rates(two_communities):
    state = init_state(two_communities, 20, 10.0, rng=derive_rng(6))
    sim = Simulator(state, combinatorial_kernel(two_communities), derive_rng(7))
    table = sim.rate_table
    expected_p = np.array([table.total_walk_x, table.total_walk_y, table.total_kill]) / table.total_rate
    counts = np.zeros(3)
    draws = 20_000
    for _ in range(draws):
        event = sim.choose_event(0.0)
        if event.kind == EventKind.KILL:
            counts[2] += 1
        elif event.walker_type == WalkerType.X:
            counts[0] += 1
        else:
            counts[1] += 1
    result = stats.chisquare(counts, expected_p * draws)
    assert result.pvalue > 0.001


@settings(max_examples=60, deadline=None)
@given(
    weights=st.lists(st.integers(0, 20), min_size=1, max_size=40).filter(lambda w: sum(w) > 0),
    updates=st.lists(st.tuples(st.integers(0, 39), st.integers(0, 20)), max_size=30),
)
def test_cumulative_table_search_matches_cumsum(weights, updates):
    table = CumulativeTable(weights)
    values = list(weights)
    for index, value in updates:
        index %= len(values)
        table.set(index, value)
        values[index] = value
    cumulative = np.cumsum(values)
    assert table.total == cumulative[-1]
    assert [table.prefix(i + 1) for i in range(len(values))] == cumulative.tolist()
    for target in range(int(cumulative[-1])):
        assert table.find(target) == int(np.searchsorted(cumulative, target, side="right"))


def test_cumulative_table_skips_zero_weights_at_the_edge():
    table = CumulativeTable([0.0, 0.3, 0.0])
    assert table.find(0.3) == 1
    assert table.find(0.0) == 1


def test_rate_tables_follow_the_state(two_communities):
    state = init_state(two_communities, 12, 50.0, rng=derive_rng(8))
    sim = Simulator(state, combinatorial_kernel(two_communities), derive_rng(9))
    for _ in range(3000):
        sim.step()
    table = sim.rate_table
    assert table.pair_table.values == (state.X * state.Y).tolist()
    assert table.count_tables[WalkerType.X].values == state.X.tolist()
    assert table.count_tables[WalkerType.Y].values == state.Y.tolist()
    for walker_type, weights in ((WalkerType.X, table.walk_x), (WalkerType.Y, table.walk_y)):
        walk = table.walk_tables[walker_type]
        np.testing.assert_allclose([walk.prefix(i + 1) for i in range(len(walk))], np.cumsum(weights), atol=1e-9)


def test_walk_sources_follow_node_rates(two_communities):
    state = init_state(two_communities, 20, 0.0, rng=derive_rng(10))
    sim = Simulator(state, combinatorial_kernel(two_communities), derive_rng(11))
    expected = sim.rate_table.walk_x / sim.rate_table.total_walk_x
    counts = np.zeros(state.node_count)
    while counts.sum() < 20_000:
        event = sim.choose_event(0.0)
        if event.walker_type == WalkerType.X:
            counts[event.source] += 1
    mask = expected > 0
    assert counts[~mask].sum() == 0
    result = stats.chisquare(counts[mask], expected[mask] * counts.sum())
    assert result.pvalue > 0.001


def test_kill_event_leaves_a_pair_node(p3):
    state = WalkerState(np.array([1, 1, 1]), np.array([0, 3, 0]), 3, 1000.0)
    sim = Simulator(state, combinatorial_kernel(p3), derive_rng(8))
    kills = [e for e in (sim.choose_event(0.0) for _ in range(200)) if e.kind == EventKind.KILL]
    assert kills
    # only node 1 holds both groups; a killed y walker has nowhere else to land
    assert all(e.source == 1 for e in kills)
    assert all(e.target == 1 for e in kills if e.walker_type == WalkerType.Y)


# =============================================================================
# Runs
# =============================================================================

def test_run_conserves_walkers(two_communities):
    traj = run(two_communities, combinatorial_kernel(two_communities), 15, 50.0, 5.0, derive_rng(9),
               sample_grid=[1.0, 2.5], record_events=True, check_invariants=True)
    assert traj.event_count == len(traj.events) > 0
    for checkpoint in traj.checkpoints:
        assert checkpoint.X.sum() == 15 and checkpoint.Y.sum() == 15
    times = [e.time for e in traj.events]
    assert times == sorted(times)
    assert 0 < times[0] and times[-1] <= 5.0
    assert traj.sample_times == [0.0, 1.0, 2.5, 5.0]


def test_same_seed_reproduces_run(two_communities):
    k = random_walk_kernel(two_communities)
    a = run(two_communities, k, 10, 100.0, 3.0, 42, record_events=True)
    b = run(two_communities, k, 10, 100.0, 3.0, 42, record_events=True)
    assert_same_trajectory(a, b)
    c = run(two_communities, k, 10, 100.0, 3.0, 43, record_events=True)
    assert a.events != c.events


def test_sample_grid_does_not_change_the_path(two_communities):
    k = combinatorial_kernel(two_communities)
    bare = run(two_communities, k, 8, 20.0, 4.0, 7, record_events=True)
    gridded = run(two_communities, k, 8, 20.0, 4.0, 7, sample_grid=[0.5, 1.0, 2.0, 3.0], record_events=True)
    assert bare.events == gridded.events
    for checkpoint in gridded.checkpoints[1:-1]:
        X, Y = bare.state_at(checkpoint.time)
        np.testing.assert_array_equal(X, checkpoint.X)
        np.testing.assert_array_equal(Y, checkpoint.Y)
        x_hat, y_hat = bare.averages(checkpoint.time)
        np.testing.assert_allclose(x_hat, checkpoint.integral_x / checkpoint.integral_x.sum(), rtol=1e-9, atol=1e-15)
        np.testing.assert_allclose(y_hat, checkpoint.integral_y / checkpoint.integral_y.sum(), rtol=1e-9, atol=1e-15)


def test_independent_walkers_without_interaction(c6):
    traj = run(c6, combinatorial_kernel(c6), 5, 0.0, 5.0, 11, record_events=True)
    assert traj.events
    assert all(e.kind == EventKind.WALK for e in traj.events)


def test_running_integrals_sum_to_n_t(c6):
    traj = run(c6, combinatorial_kernel(c6), 12, 5.0, 6.0, 13, sample_grid=[1.0, 3.0, 6.0])
    for checkpoint in traj.checkpoints:
        assert checkpoint.integral_x.sum() == pytest.approx(12 * checkpoint.time, rel=1e-9, abs=1e-12)
        assert checkpoint.integral_y.sum() == pytest.approx(12 * checkpoint.time, rel=1e-9, abs=1e-12)
    z = estimator_z_hat(traj, 6.0)
    assert z.sum() == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(traj.x_hat(6.0), traj.running_integral_x / (12 * 6.0))


def test_off_grid_query_needs_events(c6):
    traj = run(c6, combinatorial_kernel(c6), 4, 1.0, 2.0, 0)
    with pytest.raises(DomainError):
        traj.state_at(1.0)
    with pytest.raises(DomainError):
        traj.averages(0.0)
    with pytest.raises(DomainError):
        traj.averages(3.0)


@pytest.mark.parametrize(
    "horizon, grid",
    [(0.0, ()), (2.0, (1.0, 1.0)), (2.0, (0.0,)), (2.0, (3.0,))],
)
def test_run_validation(p3_kernel, p3, horizon, grid):
    with pytest.raises(DomainError):
        run(p3, p3_kernel, 2, 1.0, horizon, 0, sample_grid=grid)


@settings(max_examples=40, deadline=None)
@given(connected_graphs(max_nodes=8), st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_zero_event_run_averages_equal_initial_densities(g, n, seed):
    # a power-of-two horizon keeps X * T / (n * T) exact
    horizon = 2.0 ** -40
    traj = run(g, combinatorial_kernel(g), n, 0.01, horizon, seed)
    assume(traj.event_count == 0)
    X0, Y0 = traj.checkpoints[0].X, traj.checkpoints[0].Y
    x_hat, y_hat = traj.averages(horizon)
    np.testing.assert_array_equal(x_hat, X0 / n)
    np.testing.assert_array_equal(y_hat, Y0 / n)
    np.testing.assert_array_equal(estimator_z_hat(traj, horizon), X0 / n - Y0 / n)


# =============================================================================
# Dynamic topology
# =============================================================================

def test_schedule_validation():
    with pytest.raises(DomainError):
        DynamicSchedule((ScheduledRemoval(2.0, (0,)), ScheduledRemoval(1.0, (1,))), 5)
    with pytest.raises(DomainError):
        DynamicSchedule((ScheduledRemoval(0.0, (0,)),), 5)
    schedule = DynamicSchedule((ScheduledRemoval(1.0, (0,)), ScheduledRemoval(2.0, (1, 2))), 10)
    assert schedule.removed_count == 3
    assert schedule.cumulative_fraction == pytest.approx(0.3)


def test_apply_node_removal_relocates_walkers(p3):
    state = WalkerState(np.array([2, 0, 1]), np.array([0, 2, 1]), 3, 1.0, clock=0.7)
    removed = NodeSet.of([0], 3)
    new_state = apply_node_removal(state, removed, remove_nodes(p3, removed), derive_rng(0))
    np.testing.assert_array_equal(new_state.X, [0, 3])
    np.testing.assert_array_equal(new_state.Y, [2, 1])
    assert new_state.clock == 0.7
    assert new_state.fallback_types == ()


def test_apply_node_removal_fallback(p3):
    state = WalkerState(np.array([3, 0, 0]), np.array([1, 1, 1]), 3, 1.0)
    removed = NodeSet.of([0], 3)
    new_state = apply_node_removal(state, removed, remove_nodes(p3, removed), derive_rng(0))
    assert new_state.X.sum() == 3
    assert new_state.fallback_types == (WalkerType.X,)


def test_apply_node_removal_rejects_disconnection(p3):
    state = WalkerState(np.array([1, 1, 1]), np.array([1, 1, 1]), 3, 1.0)
    removed = NodeSet.of([1], 3)
    with pytest.raises(DisconnectedGraphError):
        apply_node_removal(state, removed, remove_nodes(p3, removed), derive_rng(0))


def test_run_with_removal(p4):
    schedule = DynamicSchedule((ScheduledRemoval(1.0, (3,)),), 4)
    traj = run(p4, combinatorial_kernel(p4), 5, 1.0, 2.0, derive_rng(21), schedule=schedule,
               sample_grid=[0.5, 1.0, 1.5, 2.0], check_invariants=True)
    assert len(traj.epochs) == 2
    assert traj.epochs[1].start == 1.0
    assert traj.epochs[1].graph.node_labels == (0, 1, 2)
    assert traj.epochs[1].kernel.size == 3
    assert traj.removals[0].labels == (3,)
    assert traj.epoch_at(0.5) == 0
    assert traj.epoch_at(1.0) == 1
    final = traj.checkpoints[-1]
    assert final.X.shape == (3,)
    assert final.X.sum() == 5 and final.Y.sum() == 5
    # the surviving nodes keep their accumulated time averages
    assert final.integral_x.sum() <= 5 * 2.0 + 1e-9
    assert traj.x_hat(2.0).sum() == pytest.approx(1.0)


def test_run_rejects_disconnecting_removal(p4):
    schedule = DynamicSchedule((ScheduledRemoval(0.5, (1,)),), 4)
    with pytest.raises(DisconnectedGraphError):
        run(p4, combinatorial_kernel(p4), 3, 1.0, 1.0, 0, schedule=schedule)


def test_schedule_beyond_horizon(p4):
    schedule = DynamicSchedule((ScheduledRemoval(5.0, (3,)),), 4)
    with pytest.raises(DomainError):
        run(p4, combinatorial_kernel(p4), 3, 1.0, 1.0, 0, schedule=schedule)


# =============================================================================
# Occupation statistics
# =============================================================================

def test_instantaneous_segments_tile_the_horizon(c6):
    traj = run(c6, combinatorial_kernel(c6), 6, 10.0, 3.0, 5, record_events=True)
    segments = list(traj.instantaneous_segments())
    assert segments[0][0] == 0.0
    assert segments[-1][1] == 3.0
    for (_, end, _), (start, _, _) in zip(segments, segments[1:]):
        assert end == start
    for _, _, z in segments:
        assert z.sum() == pytest.approx(0.0, abs=1e-12)


def test_occupation_of_whole_space(c6):
    traj = run(c6, combinatorial_kernel(c6), 6, 10.0, 3.0, 5, record_events=True)
    center = np.array([1.0, 1.0, 0.0, -1.0, -1.0, 0.0])
    assert occupation_fraction(traj, center, 1.0) == pytest.approx(1.0)
    assert occupation_fraction(traj, center, 1.0, t_window=(1.0, 2.0)) == pytest.approx(1.0)
    assert exit_time(traj, center, 1.0) is None
    assert 0.0 <= occupation_fraction(traj, center, 0.1) <= 1.0


def test_exit_time_after_leaving_the_first_state(c6):
    init = ExplicitInit((6, 0, 0, 0, 0, 0), (0, 0, 0, 6, 0, 0))
    traj = run(c6, combinatorial_kernel(c6), 6, 10.0, 3.0, 5, init=init, record_events=True)
    first_start, first_end, first_z = next(traj.instantaneous_segments())
    assert first_start == 0.0
    np.testing.assert_array_equal(first_z, [1.0, 0.0, 0.0, -1.0, 0.0, 0.0])
    assert first_end < 3.0
    assert exit_time(traj, first_z, 1e-12) == first_end
    assert occupation_fraction(traj, first_z, 1e-12) >= first_end / 3.0


def test_exit_time_is_none_when_never_entered(c6):
    traj = run(c6, combinatorial_kernel(c6), 6, 10.0, 3.0, 5, record_events=True)
    # every z sums to zero, so the constant direction is never approached
    center = np.ones(6)
    assert exit_time(traj, center, 0.5) is None
    assert occupation_fraction(traj, center, 0.5) == 0.0


def test_occupation_validation(c6):
    traj = run(c6, combinatorial_kernel(c6), 6, 10.0, 3.0, 5, record_events=True)
    with pytest.raises(DomainError):
        occupation_fraction(traj, np.zeros(6), 0.5)
    with pytest.raises(DomainError):
        occupation_fraction(traj, np.ones(6), 0.5, t_window=(2.0, 1.0))
    without_events = run(c6, combinatorial_kernel(c6), 6, 10.0, 3.0, 5)
    with pytest.raises(DomainError):
        occupation_fraction(without_events, np.ones(6), 0.5)
