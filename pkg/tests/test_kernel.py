import os
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

# Add project root to sys.path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from app.core.errors import DomainError, InvalidKernelError
from app.core.graph import NodeSet, remove_nodes
from app.core.kernel import (
    EuclideanInnerProduct,
    Kernel,
    KernelSource,
    PiInnerProduct,
    check_detailed_balance,
    combinatorial_kernel,
    from_combinatorial_laplacian,
    from_dtmc,
    from_rates,
    random_walk_kernel,
    rebuild_for_graph,
    stationary_distribution,
    symmetrize,
)
from app.core.spectral import kernel_spectrum
from app.schemas.kernel import KernelDocument, kernel_from_document, kernel_to_document, load_kernel_document
from strategies import connected_graphs

P3_WALK = np.array([[0.0, 1.0, 0.0], [0.5, 0.0, 0.5], [0.0, 1.0, 0.0]])
THREE_CYCLE = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


# =============================================================================
# Graph kernels
# =============================================================================

def test_combinatorial_kernel_on_path(p3):
    k = combinatorial_kernel(p3)
    np.testing.assert_array_equal(k.rates, [[-1, 1, 0], [1, -2, 1], [0, 1, -1]])
    np.testing.assert_allclose(k.stationary, [1 / 3] * 3)
    assert k.reversible and k.symmetric and k.uniform_stationary
    assert k.source == KernelSource.COMBINATORIAL
    assert isinstance(k.inner_product(), EuclideanInnerProduct)
    np.testing.assert_array_equal(k.exit_rates, [1, 2, 1])


def test_random_walk_kernel_on_path(p3):
    k = random_walk_kernel(p3)
    np.testing.assert_allclose(k.stationary, [0.25, 0.5, 0.25])
    np.testing.assert_allclose(k.rates.sum(axis=1), 0.0, atol=1e-15)
    assert k.reversible
    assert not k.symmetric
    assert isinstance(k.inner_product(), PiInnerProduct)


def test_random_walk_kernel_needs_connected_graph():
    from app.core.graph import Graph

    with pytest.raises(DomainError):
        random_walk_kernel(Graph(4, {(0, 1): 1.0, (2, 3): 1.0}))


def test_laplacian_must_be_symmetric():
    with pytest.raises(InvalidKernelError):
        from_combinatorial_laplacian(np.array([[1.0, -1.0], [-2.0, 2.0]]))


# =============================================================================
# Validation
# =============================================================================

@pytest.mark.parametrize(
    "rates",
    [
        np.zeros((2, 3)),
        np.array([[-1.0, 1.0], [-1.0, 1.0]]),
        np.array([[-1.0, 1.0], [1.0, -0.5]]),
        np.array([[-np.inf, np.inf], [1.0, -1.0]]),
    ],
)
def test_kernel_rejects_bad_rates(rates):
    with pytest.raises(InvalidKernelError):
        Kernel(rates)


def test_kernel_rejects_wrong_stationary(p3_kernel):
    with pytest.raises(InvalidKernelError):
        Kernel(p3_kernel.rates, stationary=np.array([0.5, 0.25, 0.25]))
    with pytest.raises(InvalidKernelError):
        Kernel(p3_kernel.rates, stationary=np.array([0.5, 0.5]))


def test_reversible_flag_is_verified():
    q = from_dtmc(THREE_CYCLE).rates
    with pytest.raises(InvalidKernelError):
        Kernel(q, stationary=np.full(3, 1 / 3), reversible=True)


def test_rates_are_read_only(p3_kernel):
    with pytest.raises(ValueError):
        p3_kernel.rates[0, 0] = 3.0


# =============================================================================
# DTMC kernels
# =============================================================================

def test_from_dtmc_path_walk():
    k = from_dtmc(P3_WALK)
    assert k.source == KernelSource.DTMC
    assert k.reversible
    np.testing.assert_allclose(k.stationary, [0.25, 0.5, 0.25], atol=1e-12)
    np.testing.assert_allclose(kernel_spectrum(k).eigenvalues, [0.0, 1.0, 2.0], atol=1e-10)


@pytest.mark.parametrize(
    "P",
    [
        np.eye(2),
        np.array([[0.5, 0.5], [0.0, 1.0]]),
        np.array([[0.5, 0.6], [0.5, 0.5]]),
        np.array([[1.5, -0.5], [0.5, 0.5]]),
    ],
)
def test_from_dtmc_rejects_reducible_or_nonstochastic(P):
    with pytest.raises(InvalidKernelError):
        from_dtmc(P)


def test_nonreversible_chain_has_no_symmetrization():
    k = from_dtmc(THREE_CYCLE)
    np.testing.assert_allclose(k.stationary, [1 / 3] * 3, atol=1e-12)
    assert not k.reversible
    assert check_detailed_balance(k) == pytest.approx(1 / 3)
    with pytest.raises(DomainError):
        symmetrize(k)
    with pytest.raises(DomainError):
        kernel_spectrum(k)


# =============================================================================
# Stationarity and reversibility
# =============================================================================

@settings(max_examples=40, deadline=None)
@given(connected_graphs(max_nodes=9))
def test_stationary_of_random_walk_is_degree_proportional(g):
    k = Kernel(random_walk_kernel(g).rates)
    np.testing.assert_allclose(stationary_distribution(k), g.degrees / g.degrees.sum(), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(connected_graphs(max_nodes=8), st.integers(0, 2 ** 32 - 1))
def test_reversible_chains_are_detected(g, seed):
    # symmetric flows W over a stationary pi give a reversible Q = Pi^{-1} W
    rng = np.random.default_rng(seed)
    pi = rng.uniform(0.5, 2.0, g.node_count)
    pi /= pi.sum()
    w = g.adjacency_matrix() * rng.uniform(0.5, 2.0, (g.node_count, g.node_count))
    w = np.triu(w, 1)
    w = w + w.T
    q = w / pi[:, None]
    np.fill_diagonal(q, -q.sum(axis=1))

    k = from_rates(q)
    assert k.reversible
    np.testing.assert_allclose(k.stationary, pi, atol=1e-9)
    m = symmetrize(k)
    np.testing.assert_allclose(m, m.T, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(connected_graphs(max_nodes=8), st.booleans())
def test_symmetrized_eigenpairs_map_to_generator_eigenpairs(g, lazy):
    # Q^T v = mu v  iff  M Pi^{-1/2} v = mu Pi^{-1/2} v
    if lazy:
        P = 0.5 * (np.eye(g.node_count) + g.adjacency_matrix() / g.degrees[:, None])
        k = from_dtmc(P)
    else:
        k = random_walk_kernel(g)
    m = symmetrize(k)
    root = np.sqrt(k.stationary)
    mu, u = np.linalg.eigh(m)
    for i in range(g.node_count):
        v = root * u[:, i]
        np.testing.assert_allclose(k.rates.T @ v, mu[i] * v, atol=1e-9)

    spectrum = kernel_spectrum(k)
    for i in range(g.node_count):
        value, v = spectrum.pair(i + 1)
        np.testing.assert_allclose(k.rates.T @ v, -value * v, atol=1e-9)
        np.testing.assert_allclose(m @ (v / root), -value * (v / root), atol=1e-9)


def test_detailed_balance_needs_stationary():
    with pytest.raises(DomainError):
        check_detailed_balance(Kernel(np.array([[-1.0, 1.0], [1.0, -1.0]])))


# =============================================================================
# Inner products
# =============================================================================

def test_pi_inner_product():
    ip = PiInnerProduct(np.array([0.25, 0.5, 0.25]))
    assert ip.inner(np.array([1.0, 1.0, 1.0]), np.array([1.0, 0.0, 1.0])) == pytest.approx(8.0)
    assert ip.norm(np.array([0.5, 0.0, 0.0])) == pytest.approx(1.0)
    np.testing.assert_allclose(ip.weights(3), [4.0, 2.0, 4.0])
    with pytest.raises(DomainError):
        ip.inner(np.ones(2), np.ones(2))


@pytest.mark.parametrize("pi", [[0.5, 0.5, 0.0], [0.5, 0.6], [[0.5, 0.5]]])
def test_pi_inner_product_validation(pi):
    with pytest.raises(DomainError):
        PiInnerProduct(np.array(pi))


# =============================================================================
# Topology changes
# =============================================================================

def test_rebuild_for_graph(p4):
    smaller = remove_nodes(p4, NodeSet.of([3], 4))
    rebuilt = rebuild_for_graph(combinatorial_kernel(p4), smaller)
    assert rebuilt.size == 3
    np.testing.assert_array_equal(rebuilt.rates, combinatorial_kernel(smaller).rates)
    assert rebuild_for_graph(random_walk_kernel(p4), smaller).source == KernelSource.RANDOM_WALK


def test_dtmc_kernel_cannot_follow_removals(p3):
    with pytest.raises(DomainError):
        rebuild_for_graph(from_dtmc(P3_WALK), p3)


# =============================================================================
# Kernel documents
# =============================================================================

def test_kernel_document_round_trip(p3):
    k = random_walk_kernel(p3)
    back = kernel_from_document(KernelDocument.model_validate_json(kernel_to_document(k).model_dump_json()))
    np.testing.assert_allclose(back.rates, k.rates)
    np.testing.assert_allclose(back.stationary, k.stationary)
    assert back.reversible


def test_kernel_document_transition(tmp_path):
    path = tmp_path / "walk.json"
    path.write_text(KernelDocument(n=3, transition=P3_WALK.tolist()).model_dump_json(), encoding="utf-8")
    k = load_kernel_document(path)
    assert k.source == KernelSource.DTMC
    np.testing.assert_allclose(k.stationary, [0.25, 0.5, 0.25], atol=1e-12)


@pytest.mark.parametrize(
    "payload",
    [
        {"n": 2},
        {"n": 2, "rates": [[-1, 1], [1, -1]], "transition": [[0, 1], [1, 0]]},
        {"n": 3, "rates": [[-1, 1], [1, -1]]},
        {"n": 2, "rates": [[-1, 1], [1, -1]], "pi": [1.0]},
    ],
)
def test_kernel_document_validation(payload):
    from pydantic import ValidationError

    with pytest.raises(ValidationError):
        KernelDocument.model_validate(payload)
