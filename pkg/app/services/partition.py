"""
Quality of the Fiedler sign partition against the exact ratio cut.
"""

from typing import List, NamedTuple

import numpy as np

from app.core.graph import Graph, brute_force_rcut, random_connected_graph, rcut_value
from app.core.kernel import combinatorial_kernel
from app.core.spectral import fiedler, sign_partition
from app.core.utils import derive_rng


class PartitionQuality(NamedTuple):
    nodes: int
    edges: int
    spectral_rcut: float
    optimal_rcut: float
    degenerate: bool

    @property
    def factor(self) -> float:
        return self.spectral_rcut / self.optimal_rcut


def partition_quality(g: Graph) -> PartitionQuality:
    result = fiedler(combinatorial_kernel(g))
    s, _ = sign_partition(result.vector)
    _, best = brute_force_rcut(g)
    return PartitionQuality(g.node_count, g.edge_count, rcut_value(g, s), best, result.degenerate)


def sample_graphs(count: int, seed: int = 0, min_nodes: int = 3, max_nodes: int = 8) -> List[Graph]:
    """Fixed-seed random connected graphs with N uniform in [min_nodes, max_nodes] and |E| uniform over its range."""
    rng = derive_rng(seed)
    graphs = []
    for _ in range(count):
        n = int(rng.integers(min_nodes, max_nodes + 1))
        m = int(rng.integers(n - 1, n * (n - 1) // 2 + 1))
        graphs.append(random_connected_graph(n, m, rng))
    return graphs


def quality_sample(count: int = 100, seed: int = 0, max_nodes: int = 8) -> List[PartitionQuality]:
    return [partition_quality(g) for g in sample_graphs(count, seed, max_nodes=max_nodes)]


def within_factor(results: List[PartitionQuality], factor: float = 2.0) -> float:
    """Fraction of graphs whose spectral cut is within `factor` of the optimum."""
    ratios = np.array([r.factor for r in results])
    return float(np.mean(ratios <= factor + 1e-12))
