"""
Dense spectral oracle and the convergence metrics of the estimator.

Core logic for:
- Cyclic Jacobi eigensolver for symmetric matrices
- Ordered spectra of -Q with left eigenvectors in the kernel's inner product
- Fiedler pair extraction with a deterministic sign convention
- Rayleigh quotient and cosine similarity, sign partitions, random-walk to
  normalized Fiedler conversion
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from app.core.config import get_settings
from app.core.errors import ConvergenceError, DegenerateInputError, DomainError, SizeLimitError
from app.core.graph import Graph, NodeSet
from app.core.kernel import EuclideanInnerProduct, InnerProduct, Kernel, symmetrize
from app.core.logs import get_logger

logger = get_logger(__name__)

SYMMETRY_TOL = 1e-10
JACOBI_TOL = 1e-12
RESIDUAL_TOL = 1e-8
DEGENERACY_TOL = 1e-9
SIGN_TIE_RTOL = 1e-9
ZERO_NORM = 1e-14


@dataclass(frozen=True, eq=False)
class SpectralResult:
    """Ascending eigenvalues with matching eigenvectors stored as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    inner_product: InnerProduct

    def pair(self, k: int) -> Tuple[float, np.ndarray]:
        """1-based k-th smallest eigenpair."""
        return float(self.eigenvalues[k - 1]), self.eigenvectors[:, k - 1]

    def __len__(self) -> int:
        return self.eigenvalues.size


@dataclass(frozen=True, eq=False)
class FiedlerResult:
    value: float
    vector: np.ndarray
    inner_product: InnerProduct
    degenerate: bool = False
    warning: Optional[str] = None
    eigenspace: Optional[np.ndarray] = None  # columns spanning the lambda_2 eigenspace

    def __iter__(self):
        # unpacks as (lambda_2, v_2)
        yield self.value
        yield self.vector


# =============================================================================
# SIGN CONVENTION
# =============================================================================

def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip v so its largest-magnitude entry is positive; ties go to the lowest index."""
    v = np.asarray(v, dtype=float)
    magnitude = np.abs(v)
    top = magnitude.max() if v.size else 0.0
    if top == 0.0:
        return v.copy()
    lead = int(np.flatnonzero(magnitude >= top * (1.0 - SIGN_TIE_RTOL))[0])
    return v.copy() if v[lead] > 0 else -v


# =============================================================================
# JACOBI
# =============================================================================

def _off_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def jacobi_eigen(m: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: Optional[int] = None) -> SpectralResult:
    """
    Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps over every (p, q) pair, zeroing a[p, q] with a plane rotation, until
    the off-diagonal Frobenius norm drops below tol * ||m||_F.

    Args:
        m: Symmetric matrix (within 1e-10)
        tol: Relative off-diagonal stopping threshold
        max_sweeps: Sweep cap, defaults to the jacobi_max_sweeps setting

    Returns:
        SpectralResult with ascending eigenvalues, canonical-sign unit eigenvectors

    Example:
        jacobi_eigen(np.array([[0.0, 1.0], [1.0, 0.0]])).eigenvalues   # [-1, 1]
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    limit = get_settings().dense_limit
    if n > limit:
        raise SizeLimitError(f"dense eigensolver refused for N={n} > {limit}")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    asymmetry = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asymmetry > SYMMETRY_TOL * max(1.0, scale):
        raise DomainError(f"matrix is not symmetric (max asymmetry {asymmetry:.3e})")
    a = 0.5 * (a + a.T)
    sweeps = max_sweeps or get_settings().jacobi_max_sweeps

    v = np.eye(n)
    threshold = tol * float(np.linalg.norm(a))
    for sweep in range(sweeps + 1):
        if _off_norm(a) <= threshold:
            break
        if sweep == sweeps:
            raise ConvergenceError(f"Jacobi did not converge in {sweeps} sweeps (off-norm {_off_norm(a):.3e})")
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0.0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q

    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    vectors = np.column_stack([canonical_sign(v[:, i]) for i in order]) if n else v

    original = 0.5 * (np.asarray(m, dtype=float) + np.asarray(m, dtype=float).T)
    norm_m = max(float(np.linalg.norm(original)), np.finfo(float).tiny)
    residuals = np.linalg.norm(original @ vectors - vectors * eigenvalues, axis=0)
    if np.any(residuals > RESIDUAL_TOL * norm_m):
        raise ConvergenceError(f"eigenpair residual {residuals.max():.3e} above tolerance")
    return SpectralResult(eigenvalues, vectors, EuclideanInnerProduct())


# =============================================================================
# KERNEL SPECTRA
# =============================================================================

def kernel_spectrum(k: Kernel) -> SpectralResult:
    """
    Spectrum of -Q with left eigenvectors (Q^T v = -lambda v).

    Eigenvectors u of the symmetrized -M map back as v = Pi^{1/2} u and are
    normalized in the kernel's inner product.
    """
    m = symmetrize(k)
    sym = jacobi_eigen(-m)
    root = np.sqrt(k.stationary)
    ip = k.inner_product()
    columns = []
    for i in range(len(sym)):
        vec = root * sym.eigenvectors[:, i]
        vec = vec / ip.norm(vec)
        columns.append(canonical_sign(vec))
    return SpectralResult(sym.eigenvalues, np.column_stack(columns), ip)


def fiedler(k: Kernel) -> FiedlerResult:
    """
    Second-smallest eigenpair of -Q for a reversible kernel.

    When lambda_2 = lambda_3 within 1e-9 the returned vector is one member of
    the eigenspace; the result is flagged and carries an eigenspace basis.
    """
    if k.size < 2:
        raise DomainError("a Fiedler pair needs at least two states")
    spectrum = kernel_spectrum(k)
    value, vector = spectrum.pair(2)
    lam = spectrum.eigenvalues
    tied = np.flatnonzero(np.abs(lam[1:] - value) <= DEGENERACY_TOL) + 1
    degenerate = tied.size > 1
    warning = None
    if degenerate:
        warning = f"lambda_2 = {value:.12g} has multiplicity {tied.size}; Fiedler vector is not unique"
        logger.warning("fiedler_degenerate", lambda2=value, multiplicity=int(tied.size))
    return FiedlerResult(
        value=value,
        vector=vector,
        inner_product=spectrum.inner_product,
        degenerate=degenerate,
        warning=warning,
        eigenspace=spectrum.eigenvectors[:, tied],
    )


# =============================================================================
# METRICS
# =============================================================================

def _checked(z: np.ndarray, k: Kernel, ip: InnerProduct) -> Tuple[np.ndarray, float]:
    z = np.asarray(z, dtype=float)
    if z.shape != (k.size,):
        raise DomainError(f"vector of shape {z.shape} against a kernel of size {k.size}")
    norm = ip.norm(z)
    if norm < ZERO_NORM:
        raise DegenerateInputError("vector norm below 1e-14")
    return z, norm


def rayleigh_quotient(z: np.ndarray, k: Kernel) -> float:
    """<z, -Q^T z> / <z, z> in the kernel's inner product."""
    ip = k.inner_product()
    z, norm = _checked(z, k, ip)
    return ip.inner(z, -(k.rates.T @ z)) / (norm * norm)


def cosine_similarity(z: np.ndarray, v2: np.ndarray, k: Kernel) -> float:
    """|<z, v2>| / (||z|| ||v2||), clipped into [0, 1]."""
    ip = k.inner_product()
    z, nz = _checked(z, k, ip)
    v2, nv = _checked(v2, k, ip)
    return float(min(1.0, abs(ip.inner(z, v2)) / (nz * nv)))


def eigenspace_similarity(z: np.ndarray, basis: np.ndarray, k: Kernel) -> float:
    """||projection of z onto span(basis)|| / ||z||; basis columns orthonormal in the kernel's inner product."""
    ip = k.inner_product()
    z, nz = _checked(z, k, ip)
    coefficients = np.array([ip.inner(z, basis[:, i]) for i in range(basis.shape[1])])
    return float(min(1.0, np.sqrt(np.sum(coefficients ** 2)) / nz))


def sign_partition(v: np.ndarray) -> Tuple[NodeSet, NodeSet]:
    """
    S = {i : v_i > 0} after the canonical sign flip; zero entries join S^c.

    Applying the sign convention first makes v and -v give the same split.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise DomainError("sign partition needs a vector with at least two entries")
    if np.max(np.abs(v)) == 0.0:
        raise DegenerateInputError("zero vector carries no partition")
    v = canonical_sign(v)
    positive = np.flatnonzero(v > 0)
    if positive.size == v.size:
        raise DegenerateInputError("constant-sign vector carries no cut information")
    s = NodeSet.of(positive.tolist(), v.size)
    return s, s.complement()


def rw_to_normalized_fiedler(v_rw: np.ndarray, g: Graph) -> np.ndarray:
    """[v_bar]_i = [v_rw]_i / sqrt(d(i))."""
    v_rw = np.asarray(v_rw, dtype=float)
    if v_rw.shape != (g.node_count,):
        raise DomainError(f"vector of shape {v_rw.shape} against a graph with {g.node_count} nodes")
    if np.any(g.degrees <= 0):
        raise DomainError(f"node {int(np.flatnonzero(g.degrees <= 0)[0])} has degree 0")
    return v_rw / np.sqrt(g.degrees)


def normalized_to_rw_fiedler(v_bar: np.ndarray, g: Graph) -> np.ndarray:
    v_bar = np.asarray(v_bar, dtype=float)
    if v_bar.shape != (g.node_count,):
        raise DomainError(f"vector of shape {v_bar.shape} against a graph with {g.node_count} nodes")
    return v_bar * np.sqrt(g.degrees)
