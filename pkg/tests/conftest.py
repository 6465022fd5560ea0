import os
import sys

import numpy as np
import pytest

# Add project root to sys.path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from app.core.config import TWO_COMMUNITIES_FILE
from app.core.graph import Graph, load_edge_list
from app.core.kernel import combinatorial_kernel


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def complete_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def star_graph(leaves: int) -> Graph:
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


# =============================================================================
# Graph fixtures
# =============================================================================

@pytest.fixture
def p3():
    return path_graph(3)


@pytest.fixture
def p4():
    return path_graph(4)


@pytest.fixture
def k3():
    return complete_graph(3)


@pytest.fixture
def k4():
    return complete_graph(4)


@pytest.fixture
def c4():
    return cycle_graph(4)


@pytest.fixture
def c6():
    return cycle_graph(6)


@pytest.fixture
def star4():
    """Centre 0 with three leaves."""
    return star_graph(3)


@pytest.fixture
def two_communities():
    return load_edge_list(TWO_COMMUNITIES_FILE)


@pytest.fixture
def p3_kernel(p3):
    return combinatorial_kernel(p3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
