"""
Continuous-time Markov chain kernels.

Core logic for:
- Rate matrices Q with optional stationary distribution and reversibility flag
- Kernels from a combinatorial Laplacian, a DTMC (Q = P - I) and the random walk (Q = -L^rw)
- Stationary distributions, detailed-balance residuals, the pi-weighted inner product
- The symmetrization M = Pi^{1/2} Q Pi^{-1/2} used by the spectral oracle
"""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Protocol

import numpy as np

from app.core.errors import DomainError, InvalidKernelError, SingularSystemError
from app.core.graph import Graph, combinatorial_laplacian, random_walk_laplacian, require_connected

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10
BALANCE_TOL = 1e-10


class KernelSource(str, Enum):
    """Where a kernel came from; graph-derived kernels can be rebuilt after node removals."""
    COMBINATORIAL = "combinatorial"  # Q = -L
    RANDOM_WALK = "random_walk"      # Q = -L^rw
    DTMC = "dtmc"                    # Q = P - I
    CUSTOM = "custom"


# =============================================================================
# INNER PRODUCTS
# =============================================================================

class InnerProduct(Protocol):
    def inner(self, x: np.ndarray, y: np.ndarray) -> float: ...

    def norm(self, x: np.ndarray) -> float: ...

    def weights(self, size: int) -> np.ndarray: ...


class EuclideanInnerProduct:
    name = "euclidean"

    def inner(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.dot(x, y))

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(x, x), 0.0)))

    def weights(self, size: int) -> np.ndarray:
        return np.ones(size)


class PiInnerProduct:
    """<x, y> = x^T Pi^{-1} y for a strictly positive probability vector pi."""

    name = "pi"

    def __init__(self, pi: np.ndarray):
        pi = np.asarray(pi, dtype=float)
        if pi.ndim != 1 or np.any(pi <= 0):
            raise DomainError("pi must be a strictly positive vector")
        if abs(pi.sum() - 1.0) > STATIONARY_TOL:
            raise DomainError(f"pi must sum to 1, sums to {pi.sum()!r}")
        self.pi = pi

    def inner(self, x: np.ndarray, y: np.ndarray) -> float:
        return pi_inner(self, x, y)

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(x, x), 0.0)))

    def weights(self, size: int) -> np.ndarray:
        if size != self.pi.size:
            raise DomainError(f"vector of size {size} against pi of size {self.pi.size}")
        return 1.0 / self.pi


def pi_inner(p: PiInnerProduct, x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != p.pi.shape or y.shape != p.pi.shape:
        raise DomainError(f"vectors of shape {x.shape}/{y.shape} against pi of shape {p.pi.shape}")
    return float(np.sum(x * y / p.pi))


# =============================================================================
# KERNEL
# =============================================================================

@dataclass(frozen=True, eq=False)
class Kernel:
    """
    CTMC rate matrix.

    rates[j, i] is the rate of a j -> i jump; rows sum to zero. The
    reversible flag is only ever set after detailed balance was checked.
    """

    rates: np.ndarray
    stationary: Optional[np.ndarray] = None
    reversible: bool = False
    source: KernelSource = KernelSource.CUSTOM
    symmetric: bool = field(init=False, default=False)

    def __post_init__(self):
        q = np.array(self.rates, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
            raise InvalidKernelError(f"rate matrix must be square, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise InvalidKernelError("rate matrix has non-finite entries")
        off = q - np.diag(np.diag(q))
        if np.any(off < 0):
            i, j = np.argwhere(off < 0)[0]
            raise InvalidKernelError(f"negative off-diagonal rate Q[{i},{j}] = {q[i, j]}")
        scale = max(1.0, float(np.max(np.abs(np.diag(q)))))
        row_sums = q.sum(axis=1)
        if np.any(np.abs(row_sums) > ROW_SUM_TOL * scale):
            row = int(np.argmax(np.abs(row_sums)))
            raise InvalidKernelError(f"row {row} sums to {row_sums[row]!r}, not 0")
        q.setflags(write=False)
        object.__setattr__(self, "rates", q)

        if self.stationary is not None:
            pi = np.array(self.stationary, dtype=float)
            if pi.shape != (q.shape[0],) or np.any(pi <= 0) or abs(pi.sum() - 1.0) > STATIONARY_TOL:
                raise InvalidKernelError("stationary must be a positive probability vector of size N")
            if np.max(np.abs(pi @ q)) > STATIONARY_TOL * scale:
                raise InvalidKernelError("stationary does not satisfy pi^T Q = 0")
            pi.setflags(write=False)
            object.__setattr__(self, "stationary", pi)

        if self.reversible:
            if self.stationary is None:
                raise InvalidKernelError("a reversible kernel needs its stationary distribution")
            residual = check_detailed_balance(self)
            if residual > BALANCE_TOL:
                raise InvalidKernelError(f"detailed balance residual {residual:.3e} exceeds {BALANCE_TOL}")

        object.__setattr__(self, "symmetric", bool(np.array_equal(q, q.T)))

    @property
    def size(self) -> int:
        return self.rates.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        """-Q_jj, the rate at which a single walker leaves node j."""
        return -np.diag(self.rates)

    @property
    def uniform_stationary(self) -> bool:
        return self.stationary is not None and bool(np.allclose(self.stationary, 1.0 / self.size, rtol=0, atol=1e-15))

    def inner_product(self):
        """Euclidean for symmetric kernels with uniform pi, pi-weighted otherwise."""
        if self.stationary is None or (self.symmetric and self.uniform_stationary):
            return EuclideanInnerProduct()
        return PiInnerProduct(self.stationary)


# =============================================================================
# CONSTRUCTORS
# =============================================================================

def from_combinatorial_laplacian(L: np.ndarray) -> Kernel:
    """Q = -L with uniform stationary distribution."""
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise InvalidKernelError("Laplacian must be square")
    if not np.array_equal(L, L.T):
        raise InvalidKernelError("combinatorial Laplacian must be symmetric")
    n = L.shape[0]
    return Kernel(-L, stationary=np.full(n, 1.0 / n), reversible=True, source=KernelSource.COMBINATORIAL)


def combinatorial_kernel(g: Graph) -> Kernel:
    return from_combinatorial_laplacian(combinatorial_laplacian(g))


def random_walk_kernel(g: Graph) -> Kernel:
    """Q_rw = -L^rw with pi = d / sum(d)."""
    require_connected(g, "random-walk kernel")
    q = -random_walk_laplacian(g)
    pi = g.degrees / g.degrees.sum()
    return Kernel(q, stationary=pi, reversible=True, source=KernelSource.RANDOM_WALK)


def _strongly_connected(support: np.ndarray) -> bool:
    n = support.shape[0]
    for adjacency in (support, support.T):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            node = queue.popleft()
            for nb in np.flatnonzero(adjacency[node]):
                if not seen[nb]:
                    seen[nb] = True
                    queue.append(int(nb))
        if not seen.all():
            return False
    return True


def from_dtmc(P: np.ndarray) -> Kernel:
    """
    Q_p = P - I for an irreducible row-stochastic P.

    The stationary distribution is solved, and the reversible flag is set only
    when the detailed-balance residual is within tolerance.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidKernelError("transition matrix must be square")
    if np.any(P < 0):
        raise InvalidKernelError("transition matrix has negative entries")
    row_sums = P.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
        raise InvalidKernelError(f"row {int(np.argmax(np.abs(row_sums - 1.0)))} is not stochastic")
    support = (P > 0) & ~np.eye(P.shape[0], dtype=bool)
    if P.shape[0] > 1 and not _strongly_connected(support):
        raise InvalidKernelError("transition matrix is reducible (support not strongly connected)")
    return from_rates(P - np.eye(P.shape[0]), source=KernelSource.DTMC)


def from_rates(
    Q: np.ndarray,
    stationary: Optional[np.ndarray] = None,
    source: KernelSource = KernelSource.CUSTOM,
) -> Kernel:
    """Generic kernel; pi is solved when not supplied and reversibility detected."""
    base = Kernel(np.asarray(Q, dtype=float), source=source)
    pi = stationary_distribution(base) if stationary is None else np.asarray(stationary, dtype=float)
    candidate = Kernel(base.rates, stationary=pi, source=source)
    reversible = check_detailed_balance(candidate) <= BALANCE_TOL
    return Kernel(base.rates, stationary=pi, reversible=reversible, source=source)


def rebuild_for_graph(k: Kernel, g: Graph) -> Kernel:
    """Recreate a graph-derived kernel on a modified topology."""
    if k.source == KernelSource.COMBINATORIAL:
        return combinatorial_kernel(g)
    if k.source == KernelSource.RANDOM_WALK:
        return random_walk_kernel(g)
    raise DomainError(f"a {k.source.value} kernel cannot follow graph modifications")


# =============================================================================
# STATIONARITY AND REVERSIBILITY
# =============================================================================

def stationary_distribution(k: Kernel) -> np.ndarray:
    """
    Solve pi^T Q = 0, sum(pi) = 1.

    The last equation of Q^T pi = 0 is replaced by the normalization, and the
    system is solved by LU with partial pivoting.
    """
    n = k.size
    a = k.rates.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"stationary system is singular: {exc}") from exc
    if not np.all(np.isfinite(pi)) or np.any(pi <= 0):
        raise SingularSystemError("stationary solution is not strictly positive; kernel is not irreducible")
    return pi / pi.sum()


def check_detailed_balance(k: Kernel) -> float:
    """max over i != j of |pi_i Q_ij - pi_j Q_ji|."""
    if k.stationary is None:
        raise DomainError("detailed balance needs a stationary distribution")
    flow = k.stationary[:, None] * k.rates
    return float(np.max(np.abs(flow - flow.T)))


def symmetrize(k: Kernel) -> np.ndarray:
    """M = Pi^{1/2} Q Pi^{-1/2}, symmetric for reversible kernels."""
    if not k.reversible or k.stationary is None:
        raise DomainError("symmetrize requires a reversible kernel with its stationary distribution")
    root = np.sqrt(k.stationary)
    m = root[:, None] * k.rates / root[None, :]
    return 0.5 * (m + m.T)
