"""
Graph representation and the graph-side machinery of the estimator.

Core logic for:
- Weighted undirected graphs with adjacency lists and a dense view on demand
- Edge-list parsing (Konect / SNAP / Newman style files)
- Combinatorial, normalized and random-walk Laplacians
- Connectivity, node removal and connectivity-preserving removal sampling
- Cut, RCut and NCut objectives, plus an exhaustive RCut oracle for small graphs
"""

from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import get_settings
from app.core.errors import (
    DisconnectedGraphError,
    DomainError,
    ExhaustionError,
    ParseError,
    SizeLimitError,
)
from app.core.logs import get_logger

logger = get_logger(__name__)

Edge = Tuple[int, int]


# =============================================================================
# NODE SETS
# =============================================================================

@dataclass(frozen=True)
class NodeSet:
    """Sorted, duplicate-free set of node indices of a graph with node_count nodes."""

    members: Tuple[int, ...]
    node_count: int

    @classmethod
    def of(cls, members: Iterable[int], node_count: int) -> "NodeSet":
        items = [int(m) for m in members]
        if len(set(items)) != len(items):
            raise DomainError(f"duplicate node indices in {sorted(items)}")
        for m in items:
            if not 0 <= m < node_count:
                raise DomainError(f"node index {m} outside [0, {node_count})")
        return cls(tuple(sorted(items)), node_count)

    def complement(self) -> "NodeSet":
        inside = set(self.members)
        return NodeSet(tuple(i for i in range(self.node_count) if i not in inside), self.node_count)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.node_count, dtype=bool)
        out[list(self.members)] = True
        return out

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[int]:
        return iter(self.members)

    def __contains__(self, item: object) -> bool:
        return item in self.members


# =============================================================================
# GRAPH
# =============================================================================

class Graph:
    """
    Immutable undirected weighted graph.

    Edges are stored once per unordered pair (i < j). Degree-0 nodes are
    allowed here; operations that need positive degrees or connectivity
    check for them explicitly.
    """

    def __init__(
        self,
        node_count: int,
        edges: Mapping[Edge, float],
        node_labels: Optional[Sequence[int]] = None,
    ):
        if node_count < 1:
            raise DomainError("a graph needs at least one node")
        normalized: Dict[Edge, float] = {}
        for (u, v), w in edges.items():
            u, v = int(u), int(v)
            if u == v:
                raise DomainError(f"self-loop at node {u}")
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise DomainError(f"edge ({u}, {v}) outside [0, {node_count})")
            if not w > 0:
                raise DomainError(f"edge ({u}, {v}) has nonpositive weight {w}")
            key = (u, v) if u < v else (v, u)
            if key in normalized:
                raise DomainError(f"edge {key} listed twice")
            normalized[key] = float(w)

        labels = tuple(range(node_count)) if node_labels is None else tuple(int(x) for x in node_labels)
        if len(labels) != node_count:
            raise DomainError("node_labels must have one entry per node")

        self._n = node_count
        self._edges = dict(sorted(normalized.items()))
        self._labels = labels

        neighbors: list = [[] for _ in range(node_count)]
        weights: list = [[] for _ in range(node_count)]
        for (u, v), w in self._edges.items():
            neighbors[u].append(v)
            weights[u].append(w)
            neighbors[v].append(u)
            weights[v].append(w)
        self._neighbors = tuple(np.array(nb, dtype=np.int64) for nb in neighbors)
        self._weights = tuple(np.array(ws, dtype=float) for ws in weights)

        degrees = np.array([ws.sum() for ws in self._weights], dtype=float)
        degrees.setflags(write=False)
        self._degrees = degrees

    @classmethod
    def from_edges(
        cls,
        node_count: int,
        edges: Iterable[Sequence],
        node_labels: Optional[Sequence[int]] = None,
    ) -> "Graph":
        """Build from (u, v) or (u, v, w) tuples, summing duplicate pairs."""
        merged: Dict[Edge, float] = {}
        for edge in edges:
            u, v = int(edge[0]), int(edge[1])
            w = float(edge[2]) if len(edge) > 2 else 1.0
            if u == v:
                raise DomainError(f"self-loop at node {u}")
            key = (u, v) if u < v else (v, u)
            merged[key] = merged.get(key, 0.0) + w
        return cls(node_count, merged, node_labels)

    # -------------------------------------------------------------------------

    @property
    def node_count(self) -> int:
        return self._n

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    @property
    def edges(self) -> Dict[Edge, float]:
        return dict(self._edges)

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees

    @property
    def node_labels(self) -> Tuple[int, ...]:
        return self._labels

    def neighbors(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Neighbor indices of node i and the matching edge weights."""
        return self._neighbors[i], self._weights[i]

    def index_of_label(self, label: int) -> int:
        try:
            return self._labels.index(int(label))
        except ValueError:
            raise DomainError(f"no node labelled {label} in the current graph") from None

    def adjacency_matrix(self) -> np.ndarray:
        limit = get_settings().dense_limit
        if self._n > limit:
            raise SizeLimitError(f"dense view refused for N={self._n} > {limit}")
        a = np.zeros((self._n, self._n))
        for (u, v), w in self._edges.items():
            a[u, v] = w
            a[v, u] = w
        return a

    def check_degrees(self) -> None:
        recomputed = self.adjacency_matrix().sum(axis=1)
        scale = np.maximum(1.0, np.abs(recomputed))
        if np.any(np.abs(recomputed - self._degrees) > 1e-12 * scale):
            raise DomainError("stored degrees disagree with incident edge weights")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self._n == other._n and self._edges == other._edges and self._labels == other._labels

    def __hash__(self) -> int:
        return hash((self._n, tuple(self._edges.items()), self._labels))

    def __repr__(self) -> str:
        return f"Graph(N={self._n}, |E|={self.edge_count})"


# =============================================================================
# EDGE-LIST I/O
# =============================================================================

def parse_edge_list(
    text: Union[str, Iterable[str]],
    index_base: int = 0,
    symmetrize: bool = False,
) -> Graph:
    """
    Parse a whitespace-separated edge list.

    Each non-comment line is "u v" or "u v w"; lines starting with '#' or '%'
    are comments. Indices up to the largest one seen become nodes, isolated
    ones included.

    Args:
        text: Whole file content or an iterable of lines
        index_base: 0 or 1, the index of the first node in the file
        symmetrize: Input lists directed arcs; a pair given in both directions
            collapses to one edge carrying the larger directed weight

    Returns:
        Graph

    Example:
        g = parse_edge_list("0 1\\n1 2")   # path on three nodes
    """
    if index_base not in (0, 1):
        raise DomainError(f"index_base must be 0 or 1, got {index_base}")
    lines = text.splitlines() if isinstance(text, str) else text

    directed: Dict[Edge, float] = {}
    max_index = -1
    for line_number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line[0] in "#%":
            continue
        tokens = line.split()
        if len(tokens) not in (2, 3):
            raise ParseError(f"expected 'u v' or 'u v w', got {line!r}", line_number)
        try:
            u = int(tokens[0]) - index_base
            v = int(tokens[1]) - index_base
        except ValueError:
            raise ParseError(f"node indices must be integers in {line!r}", line_number) from None
        weight = 1.0
        if len(tokens) == 3:
            try:
                weight = float(tokens[2])
            except ValueError:
                raise ParseError(f"weight is not a number in {line!r}", line_number) from None
            if not np.isfinite(weight):
                raise ParseError(f"weight must be finite in {line!r}", line_number)
            if weight <= 0:
                raise DomainError(f"line {line_number}: nonpositive weight {weight}")
        if u < 0 or v < 0:
            raise ParseError(f"node index below base {index_base} in {line!r}", line_number)
        if u == v:
            raise ParseError(f"self-loop at node {u + index_base}", line_number)
        max_index = max(max_index, u, v)
        arc = (u, v) if symmetrize else (min(u, v), max(u, v))
        directed[arc] = directed.get(arc, 0.0) + weight

    if max_index < 0:
        raise ParseError("edge list contains no edges")

    if symmetrize:
        merged: Dict[Edge, float] = {}
        for (u, v), w in directed.items():
            key = (min(u, v), max(u, v))
            merged[key] = max(merged.get(key, 0.0), w)
    else:
        merged = directed

    graph = Graph(max_index + 1, merged, node_labels=[i + index_base for i in range(max_index + 1)])
    logger.debug("edge_list_parsed", nodes=graph.node_count, edges=graph.edge_count)
    return graph


def load_edge_list(path: Union[str, Path], index_base: int = 0, symmetrize: bool = False) -> Graph:
    path = Path(path)
    if not path.exists():
        raise DomainError(f"edge list not found: {path}")
    with path.open(encoding="utf-8") as handle:
        return parse_edge_list(handle, index_base=index_base, symmetrize=symmetrize)


def random_connected_graph(node_count: int, edge_count: int, rng: np.random.Generator) -> Graph:
    """
    Random connected simple graph: a random recursive tree plus extra edges
    drawn uniformly from the missing pairs.
    """
    max_edges = node_count * (node_count - 1) // 2
    if not node_count - 1 <= edge_count <= max_edges:
        raise DomainError(f"edge_count must lie in [{node_count - 1}, {max_edges}]")
    order = rng.permutation(node_count)
    edges = set()
    for pos in range(1, node_count):
        parent = order[int(rng.integers(pos))]
        child = order[pos]
        edges.add((min(parent, child), max(parent, child)))
    missing = [(i, j) for i in range(node_count) for j in range(i + 1, node_count) if (i, j) not in edges]
    extra = edge_count - len(edges)
    if extra > 0:
        picks = rng.choice(len(missing), size=extra, replace=False)
        edges.update(missing[int(p)] for p in picks)
    return Graph(node_count, {(int(u), int(v)): 1.0 for u, v in edges})


# =============================================================================
# LAPLACIANS
# =============================================================================

def _positive_degrees(g: Graph) -> np.ndarray:
    d = g.degrees
    zero = np.flatnonzero(d <= 0)
    if zero.size:
        raise DomainError(f"node {int(zero[0])} has degree 0")
    return d


def combinatorial_laplacian(g: Graph) -> np.ndarray:
    """L = D - W."""
    return np.diag(g.degrees) - g.adjacency_matrix()


def normalized_laplacian(g: Graph) -> np.ndarray:
    """I - D^{-1/2} W D^{-1/2}; requires every degree to be positive."""
    inv_sqrt = 1.0 / np.sqrt(_positive_degrees(g))
    return np.eye(g.node_count) - inv_sqrt[:, None] * g.adjacency_matrix() * inv_sqrt[None, :]


def random_walk_laplacian(g: Graph) -> np.ndarray:
    """I - D^{-1} W; requires every degree to be positive."""
    d = _positive_degrees(g)
    return np.eye(g.node_count) - g.adjacency_matrix() / d[:, None]


# =============================================================================
# CONNECTIVITY AND REMOVAL
# =============================================================================

def is_connected(g: Graph) -> bool:
    seen = np.zeros(g.node_count, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in g.neighbors(node)[0]:
            if not seen[nb]:
                seen[nb] = True
                queue.append(int(nb))
    return bool(seen.all())


def require_connected(g: Graph, context: str = "operation") -> None:
    if not is_connected(g):
        raise DisconnectedGraphError(f"{context} requires a connected graph")


def remove_nodes(g: Graph, s: NodeSet) -> Graph:
    """Induced subgraph on the complement of s, densely reindexed; labels survive."""
    if s.node_count != g.node_count:
        raise DomainError("node set belongs to a graph of a different size")
    if len(s) >= g.node_count:
        raise DomainError("cannot remove every node of the graph")
    removed = set(s.members)
    keep = [i for i in range(g.node_count) if i not in removed]
    new_index = {old: new for new, old in enumerate(keep)}
    edges = {
        (new_index[u], new_index[v]): w
        for (u, v), w in g.edges.items()
        if u in new_index and v in new_index
    }
    labels = [g.node_labels[i] for i in keep]
    return Graph(len(keep), edges, node_labels=labels)


def sample_removable_set(
    g: Graph,
    k: int,
    rng: np.random.Generator,
    max_attempts: Optional[int] = None,
) -> NodeSet:
    """
    Rejection-sample a k-subset whose removal leaves the graph connected.

    Args:
        g: Graph to remove nodes from
        k: Number of nodes, 0 <= k < N
        rng: Random stream
        max_attempts: Rejection cap, defaults to the removal_attempts setting

    Returns:
        NodeSet of the accepted nodes
    """
    if not 0 <= k < g.node_count:
        raise DomainError(f"cannot remove {k} nodes from a graph with {g.node_count}")
    attempts = max_attempts or get_settings().removal_attempts
    for attempt in range(1, attempts + 1):
        picked = rng.choice(g.node_count, size=k, replace=False)
        candidate = NodeSet.of(picked.tolist(), g.node_count)
        if is_connected(remove_nodes(g, candidate)):
            logger.debug("removable_set_accepted", k=k, attempts=attempt)
            return candidate
    raise ExhaustionError(f"no connectivity-preserving {k}-subset found in {attempts} attempts")


# =============================================================================
# CUT OBJECTIVES
# =============================================================================

def _proper(g: Graph, s: NodeSet) -> None:
    if s.node_count != g.node_count:
        raise DomainError("node set belongs to a graph of a different size")
    if len(s) == 0 or len(s) == g.node_count:
        raise DomainError("cut objectives need a nonempty proper subset")


def cut_value(g: Graph, s: NodeSet) -> float:
    """Total weight of edges with exactly one endpoint in s."""
    _proper(g, s)
    inside = s.mask()
    return float(sum(w for (u, v), w in g.edges.items() if inside[u] != inside[v]))


def rcut_value(g: Graph, s: NodeSet) -> float:
    cut = cut_value(g, s)
    return cut / len(s) + cut / (g.node_count - len(s))


def ncut_value(g: Graph, s: NodeSet) -> float:
    cut = cut_value(g, s)
    vol_s = float(g.degrees[list(s.members)].sum())
    vol_c = float(g.degrees.sum()) - vol_s
    if vol_s <= 0 or vol_c <= 0:
        raise DomainError("NCut needs positive volume on both sides")
    return cut / vol_s + cut / vol_c


def brute_force_rcut(g: Graph) -> Tuple[NodeSet, float]:
    """
    Exhaustive RCut minimum over all unordered bipartitions (N <= 16).

    Every bipartition is enumerated once as the side holding node 0, which is
    also the lexicographically smaller side. Ties go to the lexicographically
    smallest member tuple.
    """
    n = g.node_count
    limit = get_settings().brute_force_limit
    if n > limit:
        raise SizeLimitError(f"brute-force RCut refused for N={n} > {limit}")
    if n < 2:
        raise DomainError("RCut needs at least two nodes")

    masks = np.arange(1, 2 ** n, 2, dtype=np.int64)[:-1]  # node 0 inside, full set excluded
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    edge_list = list(g.edges.items())
    us = np.array([u for (u, _), _ in edge_list], dtype=np.int64)
    vs = np.array([v for (_, v), _ in edge_list], dtype=np.int64)
    ws = np.array([w for _, w in edge_list], dtype=float)
    cuts = (bits[:, us] != bits[:, vs]).astype(float) @ ws if ws.size else np.zeros(masks.size)
    sizes = bits.sum(axis=1)
    values = cuts / sizes + cuts / (n - sizes)

    best = float(values.min())
    tied = np.flatnonzero(values <= best + 1e-12 * max(1.0, abs(best)))
    candidates = [tuple(int(i) for i in np.flatnonzero(bits[t])) for t in tied]
    members = min(candidates)
    winner = NodeSet(members, n)
    return winner, rcut_value(g, winner)
