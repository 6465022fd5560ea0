"""
Fluid limit of the walker process and its stability diagnostics.

Core logic for:
- The mean-field vector field F(x, y) and a pairwise-rate oracle for it
- Fixed-step RK4 integration on the product of simplices, batched over initial conditions
- Lyapunov function V and its spectral-variance derivative
- Jacobian, its decomposition on the diagonal x = y, and the instability check there
- Deviation bound between process and ODE, and a sampled Lipschitz estimate
"""

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.config import get_settings
from app.core.errors import DegenerateInputError, DomainError, SimplexCollapseError
from app.core.kernel import Kernel
from app.core.logs import get_logger
from app.core.simulator import Trajectory
from app.core.spectral import (
    SpectralResult,
    cosine_similarity,
    jacobi_eigen,
    kernel_spectrum,
    rayleigh_quotient,
)
from app.core.utils import as_rng

logger = get_logger(__name__)

SIMPLEX_TOL = 1e-9
COLLAPSE_NORM = 1e-13
ORTHOGONALITY_TOL = 1e-10
POSITIVE_EIGEN_TOL = 1e-9


# =============================================================================
# VECTOR FIELD
# =============================================================================

def _field(X: np.ndarray, Y: np.ndarray, Q: np.ndarray, kappa: float) -> Tuple[np.ndarray, np.ndarray]:
    # rows are states; X @ Q is Q^T x for each row x
    lam = kappa * np.sum(X * Y, axis=-1, keepdims=True)
    overlap = kappa * X * Y
    return X @ Q + lam * X - overlap, Y @ Q + lam * Y - overlap


def vector_field(x: np.ndarray, y: np.ndarray, k: Kernel, kappa: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    F_x = Q^T x + kappa (x^T y) x - kappa D_y x, and symmetrically F_y.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (k.size,) or y.shape != (k.size,):
        raise DomainError(f"state vectors must have shape ({k.size},)")
    return _field(x, y, k.rates, kappa)


def vector_field_pairwise(x: np.ndarray, y: np.ndarray, k: Kernel, kappa: float) -> Tuple[np.ndarray, np.ndarray]:
    """Drift summed jump by jump: every j -> i move contributes (e_i - e_j) times its rate density."""
    n = k.size
    fx = np.zeros(n)
    fy = np.zeros(n)
    Q = k.rates
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            rate_x = Q[j, i] * x[j] + kappa * x[j] * y[j] * x[i]
            rate_y = Q[j, i] * y[j] + kappa * y[j] * x[j] * y[i]
            fx[i] += rate_x
            fx[j] -= rate_x
            fy[i] += rate_y
            fy[j] -= rate_y
    return fx, fy


def lambda_t(x: np.ndarray, y: np.ndarray, kappa: float) -> float:
    """Interaction intensity kappa x^T y."""
    return float(kappa * np.dot(x, y))


# =============================================================================
# INTEGRATION
# =============================================================================

@dataclass(frozen=True)
class OdeState:
    x: np.ndarray
    y: np.ndarray
    t: float

    @property
    def z(self) -> np.ndarray:
        return self.x - self.y


@dataclass(eq=False)
class OdeTrajectory:
    """Recorded RK4 path; rows of xs / ys match times."""

    times: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    kernel: Kernel
    kappa: float
    dt: float
    max_mass_drift: float

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def zs(self) -> np.ndarray:
        return self.xs - self.ys

    @property
    def z_tilde(self) -> np.ndarray:
        weights = self.kernel.inner_product().weights(self.kernel.size)
        zs = self.zs
        norms = np.sqrt(np.sum(weights * zs * zs, axis=1))
        return zs / norms[:, None]

    @property
    def lambdas(self) -> np.ndarray:
        return self.kappa * np.sum(self.xs * self.ys, axis=1)

    @property
    def final(self) -> OdeState:
        return OdeState(self.xs[-1].copy(), self.ys[-1].copy(), self.horizon)

    def state_at(self, t: float) -> OdeState:
        """Linear interpolation between recorded points."""
        if not self.times[0] <= t <= self.times[-1]:
            raise DomainError(f"t = {t} outside the integrated range [0, {self.horizon}]")
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        if idx >= len(self.times) - 1:
            return OdeState(self.xs[-1].copy(), self.ys[-1].copy(), float(t))
        t0, t1 = self.times[idx], self.times[idx + 1]
        w = (t - t0) / (t1 - t0)
        return OdeState(
            (1 - w) * self.xs[idx] + w * self.xs[idx + 1],
            (1 - w) * self.ys[idx] + w * self.ys[idx + 1],
            float(t),
        )


def step_size(k: Kernel, kappa: float, dt_max: Optional[float] = None) -> float:
    """dt = min(dt_max, 0.1 / (2 max_j(-Q_jj) + 2 kappa))."""
    dt_max = get_settings().ode_dt_max if dt_max is None else dt_max
    return min(dt_max, 0.1 / (2.0 * float(np.max(k.exit_rates)) + 2.0 * kappa))


def _validate_simplex(name: str, v: np.ndarray, size: int) -> None:
    if v.shape[-1] != size:
        raise DomainError(f"{name} must have {size} entries per state")
    if np.any(v < -1e-15):
        raise DomainError(f"{name} has negative entries")
    if np.any(np.abs(v.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
        raise DomainError(f"{name} does not sum to 1")


def integrate_many(
    X0: np.ndarray,
    Y0: np.ndarray,
    k: Kernel,
    kappa: float,
    T: float,
    dt_max: Optional[float] = None,
    record_every: Optional[int] = None,
) -> List[OdeTrajectory]:
    """
    RK4 over a batch of initial conditions, one row per trajectory.

    Args:
        X0, Y0: (B, N) initial densities on the simplex, X0 != Y0 row-wise
        k: Kernel
        kappa: Interaction strength
        T: Horizon
        dt_max: Step cap, defaults to the ode_dt_max setting
        record_every: Keep every k-th step; by default sized to ode_max_records

    Returns:
        One OdeTrajectory per row
    """
    X = np.atleast_2d(np.array(X0, dtype=float))
    Y = np.atleast_2d(np.array(Y0, dtype=float))
    if X.shape != Y.shape:
        raise DomainError("X0 and Y0 must have the same shape")
    if not T > 0:
        raise DomainError("horizon must be positive")
    _validate_simplex("x0", X, k.size)
    _validate_simplex("y0", Y, k.size)
    if np.any(np.linalg.norm(X - Y, axis=1) < COLLAPSE_NORM):
        raise SimplexCollapseError("initial condition lies on x = y; z vanishes identically", 0.0)

    dt_cap = step_size(k, kappa, dt_max)
    steps = int(math.ceil(T / dt_cap))
    dt = T / steps
    if record_every is None:
        record_every = max(1, int(math.ceil(steps / (get_settings().ode_max_records - 1))))

    Q = k.rates
    times = [0.0]
    xs = [X.copy()]
    ys = [Y.copy()]
    max_drift = 0.0
    half = 0.5 * dt
    for step in range(1, steps + 1):
        k1x, k1y = _field(X, Y, Q, kappa)
        k2x, k2y = _field(X + half * k1x, Y + half * k1y, Q, kappa)
        k3x, k3y = _field(X + half * k2x, Y + half * k2y, Q, kappa)
        k4x, k4y = _field(X + dt * k3x, Y + dt * k3y, Q, kappa)
        X = X + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        Y = Y + (dt / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)

        mass_x = X.sum(axis=1, keepdims=True)
        mass_y = Y.sum(axis=1, keepdims=True)
        max_drift = max(max_drift, float(np.max(np.abs(mass_x - 1.0))), float(np.max(np.abs(mass_y - 1.0))))
        X = X / mass_x
        Y = Y / mass_y

        norms = np.linalg.norm(X - Y, axis=1)
        if np.any(norms < COLLAPSE_NORM):
            row = int(np.argmin(norms))
            t = step * dt
            logger.error("ode_collapsed", row=row, t=t, norm=float(norms[row]))
            raise SimplexCollapseError(f"trajectory {row} entered x = y at t = {t:.6g}", t)

        if step % record_every == 0 or step == steps:
            times.append(step * dt)
            xs.append(X.copy())
            ys.append(Y.copy())

    logger.info("ode_integrated", steps=steps, dt=dt, batch=X.shape[0], max_mass_drift=max_drift)
    times_arr = np.array(times)
    xs_arr = np.stack(xs, axis=1)
    ys_arr = np.stack(ys, axis=1)
    return [
        OdeTrajectory(times_arr, xs_arr[b], ys_arr[b], k, kappa, dt, max_drift)
        for b in range(X.shape[0])
    ]


def integrate(
    x0: np.ndarray,
    y0: np.ndarray,
    k: Kernel,
    kappa: float,
    T: float,
    dt_max: Optional[float] = None,
    record_every: Optional[int] = None,
) -> OdeTrajectory:
    """Single-trajectory RK4; see integrate_many."""
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if x0.ndim != 1 or y0.ndim != 1:
        raise DomainError("x0 and y0 must be vectors")
    return integrate_many(x0[None, :], y0[None, :], k, kappa, T, dt_max, record_every)[0]


def embed_direction(z: np.ndarray, margin: float = 0.5) -> Tuple[np.ndarray, np.ndarray]:
    """
    (x, y) = (u + s z / 2, u - s z / 2) around the uniform vector u, with s
    chosen so every entry stays at least (1 - margin) / N.
    """
    z = np.asarray(z, dtype=float)
    if not 0 < margin < 1:
        raise DomainError("margin must lie in (0, 1)")
    if abs(z.sum()) > ORTHOGONALITY_TOL * max(1.0, float(np.abs(z).sum())):
        raise DomainError("direction must be orthogonal to the all-ones vector")
    peak = float(np.max(np.abs(z)))
    if peak == 0.0:
        raise DegenerateInputError("cannot embed the zero direction")
    n = z.size
    s = margin * (2.0 / n) / peak
    u = np.full(n, 1.0 / n)
    x = u + 0.5 * s * z
    y = u - 0.5 * s * z
    return x / x.sum(), y / y.sum()


# =============================================================================
# LYAPUNOV DIAGNOSTICS
# =============================================================================

def lyapunov_V(u: np.ndarray, k: Kernel) -> float:
    """V(u) = 1/2 <u, -Q^T u>."""
    u = np.asarray(u, dtype=float)
    return 0.5 * k.inner_product().inner(u, -(k.rates.T @ u))


def dV_dt_analytic(z: np.ndarray, k: Kernel, spectrum: Optional[SpectralResult] = None) -> float:
    """
    Derivative of V along the normalized flow at direction z.

    With c_k = <z, v_k> and p_k = c_k^2 / sum c^2 this is
    (sum lambda_k p_k)^2 - sum lambda_k^2 p_k, minus the variance of the
    eigenvalue drawn with probabilities p.
    """
    z = np.asarray(z, dtype=float)
    ip = k.inner_product()
    norm = ip.norm(z)
    if norm < 1e-14:
        raise DegenerateInputError("direction has zero norm")
    if abs(z.sum()) > ORTHOGONALITY_TOL * max(1.0, norm):
        raise DomainError(f"direction is not orthogonal to 1 (1^T z = {z.sum():.3e})")
    spectrum = spectrum or kernel_spectrum(k)
    weights = ip.weights(k.size)
    coefficients = spectrum.eigenvectors[:, 1:].T @ (weights * z)
    lam = spectrum.eigenvalues[1:]
    p = coefficients ** 2 / np.sum(coefficients ** 2)
    mean = float(np.sum(lam * p))
    return mean * mean - float(np.sum(lam * lam * p))


def fixed_point_residual(z: np.ndarray, k: Kernel) -> float:
    """|| -Q^T z - RQ(z) z || for the normalized direction z."""
    ip = k.inner_product()
    z = np.asarray(z, dtype=float)
    z = z / ip.norm(z)
    lam = rayleigh_quotient(z, k)
    return ip.norm(-(k.rates.T @ z) - lam * z)


def normalized_series(traj: OdeTrajectory, k: Kernel, v2: np.ndarray) -> List[Tuple[float, float, float, float, float]]:
    """Rows (t, RQ(z~), CS(z~, v2), V(z~), Lambda) for every recorded time."""
    rows = []
    for t, z, lam in zip(traj.times, traj.z_tilde, traj.lambdas):
        rows.append((float(t), rayleigh_quotient(z, k), cosine_similarity(z, v2, k), lyapunov_V(z, k), float(lam)))
    return rows


# =============================================================================
# JACOBIAN AND STABILITY OF THE DIAGONAL
# =============================================================================

def jacobian(x: np.ndarray, y: np.ndarray, k: Kernel, kappa: float) -> np.ndarray:
    """
    Derivative of (F_x, F_y) with respect to (x, y):

        [[Q^T + k(x y^T + (x^T y) I - D_y),  k(x x^T - D_x)],
         [k(y y^T - D_y),                    Q^T + k(y x^T + (x^T y) I - D_x)]]
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = k.size
    eye = np.eye(n)
    qt = k.rates.T
    overlap = float(x @ y)
    top_left = qt + kappa * (np.outer(x, y) + overlap * eye - np.diag(y))
    top_right = kappa * (np.outer(x, x) - np.diag(x))
    bottom_left = kappa * (np.outer(y, y) - np.diag(y))
    bottom_right = qt + kappa * (np.outer(y, x) + overlap * eye - np.diag(x))
    return np.block([[top_left, top_right], [bottom_left, bottom_right]])


def diagonal_expansion(x: np.ndarray, k: Kernel, kappa: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Split J(x, x) = A + B + C with A = diag(Q^T, Q^T), B = kappa ||x||^2 I and
    C = kappa [[1, 1], [1, 1]] (x) (x x^T - D_x); C has N + 1 zero eigenvalues.
    """
    x = np.asarray(x, dtype=float)
    n = k.size
    qt = k.rates.T
    a = np.block([[qt, np.zeros((n, n))], [np.zeros((n, n)), qt]])
    b = kappa * float(x @ x) * np.eye(2 * n)
    c = kappa * np.kron(np.ones((2, 2)), np.outer(x, x) - np.diag(x))
    return a, b, c


class InstabilityReport(NamedTuple):
    count_positive: int             # eigenvalues of (J + J^T)/2 above 1e-9
    threshold_bound: float          # -lambda_N + kappa min x_i^2
    symmetric_eigenvalues: np.ndarray
    general_positive_count: int     # eigenvalues of J with real part above 1e-9
    leading_real_part: float        # max real part over the general spectrum of J
    bound_is_rigorous: bool         # only for symmetric kernels


def s0_instability_check(x: np.ndarray, k: Kernel, kappa: float) -> InstabilityReport:
    """
    Eigen-analysis of the Jacobian on the diagonal (x, x).

    The symmetrized Jacobian goes through the Jacobi oracle and is compared
    with the lower bound -lambda_N + kappa min x_i^2 on its N+1 largest
    eigenvalues; the true (non-symmetric) spectrum is counted separately.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (k.size,):
        raise DomainError(f"x must have {k.size} entries")
    if np.any(x <= 0):
        raise DomainError("x must be strictly positive")
    if abs(x.sum() - 1.0) > SIMPLEX_TOL:
        raise DomainError("x must lie on the simplex")

    J = jacobian(x, x, k, kappa)
    symmetric = jacobi_eigen(0.5 * (J + J.T)).eigenvalues
    count = int(np.sum(symmetric > POSITIVE_EIGEN_TOL))

    if k.reversible:
        lambda_max = float(kernel_spectrum(k).eigenvalues[-1])
    else:
        lambda_max = float(jacobi_eigen(-0.5 * (k.rates + k.rates.T)).eigenvalues[-1])
    bound = -lambda_max + kappa * float(np.min(x * x))

    general = np.linalg.eigvals(J)
    return InstabilityReport(
        count_positive=count,
        threshold_bound=bound,
        symmetric_eigenvalues=symmetric,
        general_positive_count=int(np.sum(general.real > POSITIVE_EIGEN_TOL)),
        leading_real_part=float(general.real.max()),
        bound_is_rigorous=k.symmetric,
    )


# =============================================================================
# DEVIATION BOUND
# =============================================================================

class DeviationBoundInputs(BaseModel):
    """Inputs of the process-vs-ODE deviation bound."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(gt=0, description="Walkers per group")
    kappa: float = Field(gt=0, description="Interaction strength")
    N: int = Field(ge=2, description="Number of nodes")
    T: float = Field(gt=0, description="Horizon")
    epsilon: float = Field(ge=0, description="Deviation threshold")
    M: float = Field(gt=0, description="Lipschitz constant of F (estimate or user supplied)")


class DeviationBound(NamedTuple):
    probability: float  # raw clamped to [0, 1]
    raw: float
    log_raw: float


def h(x: float) -> float:
    """h(x) = (1 + x) log(1 + x) - x for x >= 0."""
    if x < 0:
        raise DomainError("h is defined for x >= 0")
    return (1.0 + x) * math.log1p(x) - x


def deviation_bound(inp: DeviationBoundInputs) -> DeviationBound:
    """
    P(sup_t ||(x^n, y^n) - (x, y)|| >= eps) <=
        4 N (N - 1) exp(-n (1 + kappa) T h(eps e^{-M T} / (sqrt(2) N (N - 1) (1 + kappa) T))).
    """
    pairs = inp.N * (inp.N - 1)
    scale = (1.0 + inp.kappa) * inp.T
    argument = inp.epsilon * math.exp(-inp.M * inp.T) / (math.sqrt(2.0) * pairs * scale)
    log_raw = math.log(4.0 * pairs) - inp.n * scale * h(argument)
    raw = 4.0 * pairs * math.exp(-inp.n * scale * h(argument))
    return DeviationBound(probability=min(1.0, max(0.0, raw)), raw=raw, log_raw=log_raw)


# =============================================================================
# LIPSCHITZ ESTIMATE
# =============================================================================

class LipschitzEstimate(NamedTuple):
    value: float
    samples: int
    history: np.ndarray  # running maximum after each sample


def spectral_norm(J: np.ndarray, iterations: int = 1000, tol: float = 1e-12, rng=None) -> float:
    """Largest singular value by power iteration on J^T J."""
    rng = as_rng(0 if rng is None else rng)
    gram = J.T @ J
    v = rng.standard_normal(J.shape[1])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iterations):
        w = gram @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(norm - estimate) <= tol * norm:
            estimate = norm
            break
        estimate = norm
    return math.sqrt(estimate)


def estimate_lipschitz_M(k: Kernel, kappa: float, samples: int, rng=None) -> LipschitzEstimate:
    """
    Sampled lower estimate of the Lipschitz constant of F on the simplex pair:
    the running max of ||J(x, y)||_2 over Dirichlet(1, ..., 1) draws.
    """
    if samples < 1:
        raise DomainError("at least one sample is needed")
    rng = as_rng(0 if rng is None else rng)
    alpha = np.ones(k.size)
    history = np.empty(samples)
    best = 0.0
    for i in range(samples):
        x = rng.dirichlet(alpha)
        y = rng.dirichlet(alpha)
        best = max(best, spectral_norm(jacobian(x, y, k, kappa), rng=rng))
        history[i] = best
    return LipschitzEstimate(best, samples, history)


# =============================================================================
# PROCESS VS FLUID LIMIT
# =============================================================================

def sup_deviation(sim: Trajectory, ode: OdeTrajectory, grid: Sequence[float]) -> float:
    """max over grid of ||(x^n(t), y^n(t)) - (x(t), y(t))||."""
    if len(sim.epochs) > 1:
        raise DomainError("deviation is defined for static topologies")
    end = min(sim.horizon, ode.horizon)
    worst = 0.0
    for t in grid:
        if not 0 <= t <= end:
            raise DomainError(f"grid time {t} outside [0, {end}]")
        X, Y = sim.state_at(t)
        ref = ode.state_at(t)
        gap = math.sqrt(float(np.sum((X / sim.n - ref.x) ** 2) + np.sum((Y / sim.n - ref.y) ** 2)))
        worst = max(worst, gap)
    return worst
