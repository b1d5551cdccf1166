"""Model core: parameterization, excitation state, and stability diagnostics.

The intensity of component i is

    lambda_i(t) = mu_i + sum_j integral of k_ij(t - s) w_ij(x_s) dN_j(s)

where the temporal kernel k_ij is either a plain exponential decay
(``ScalarExpKernel``) or a generalized form ``<A_ij | exp(-s B_ij)>``
(``MatrixExpKernel``), and the event weight w_ij is a constant excitation
coefficient alpha_ij (unmarked models) or a linear form ``m_ij . x`` in the
event's mark x (marked models).

Everything here is immutable after construction; state transitions return
fresh values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

SIMPLEX_TOL = 1e-9


class ModelError(ValueError):
    """Invalid model parameterization or state."""


class StabilityError(ModelError):
    """Branching matrix spectral radius at or above 1, or diagnostics failed."""


class UnsupportedModelError(ModelError):
    """Operation outside the supported model family."""


def _frozen(a: np.ndarray, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.flags.writeable = False
    return out


def check_simplex(x: np.ndarray, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a mark vector: components >= 0, sum 1 within ``tol``."""
    x = np.asarray(x, float)
    if x.ndim != 1:
        raise ModelError("mark must be a 1-d vector")
    if np.any(x < -tol) or abs(float(x.sum()) - 1.0) > tol:
        raise ModelError(f"mark {x!r} is off the simplex beyond tolerance {tol:g}")
    return x


@dataclass(frozen=True)
class ParamBounds:
    """Admissible boxes per parameter block (open convex sets, closed here)."""

    mu: tuple[float, float] = (1e-6, 10.0)
    alpha: tuple[float, float] = (0.0, 10.0)
    beta: tuple[float, float] = (1e-2, 20.0)
    m: tuple[float, float] = (0.0, 10.0)

    def __post_init__(self):
        for name in ("mu", "alpha", "beta", "m"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ModelError(f"bounds for {name} must be finite with lo <= hi")


@dataclass(frozen=True)
class ScalarExpKernel:
    """Exponential kernels alpha_ij * exp(-beta_ij * s) per edge.

    ``alpha`` is None for marked models, where the excitation weight comes
    from the mark linear form instead.
    """

    beta: np.ndarray            # (d, d) decay rates
    alpha: Optional[np.ndarray] = None  # (d, d) excitation coefficients

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, float))
        if beta.ndim != 2 or beta.shape[0] != beta.shape[1]:
            raise ModelError("beta must be a square matrix")
        object.__setattr__(self, "beta", _frozen(beta))
        if self.alpha is not None:
            alpha = np.atleast_2d(np.asarray(self.alpha, float))
            if alpha.shape != beta.shape:
                raise ModelError("alpha and beta shapes differ")
            if np.any(alpha < 0):
                raise ModelError("alpha must be non-negative")
            object.__setattr__(self, "alpha", _frozen(alpha))

    @property
    def dim(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class MatrixExpKernel:
    """Generalized kernels <A_ij | exp(-s B_ij)> per edge.

    A and B are (d, d, p, p); every B_ij must have eigenvalues with real
    part >= ``min_decay``. The kernel function itself must be non-negative
    (a modeling requirement, not checked pointwise).
    """

    A: np.ndarray
    B: np.ndarray
    min_decay: float = 1e-6

    def __post_init__(self):
        A = np.asarray(self.A, float)
        B = np.asarray(self.B, float)
        if A.ndim != 4 or A.shape != B.shape or A.shape[0] != A.shape[1] or A.shape[2] != A.shape[3]:
            raise ModelError("A and B must both be (d, d, p, p)")
        if A.shape[2] > 8:
            raise ModelError("matrix kernels supported up to p = 8")
        d, p = A.shape[0], A.shape[2]
        for i in range(d):
            for j in range(d):
                ev = np.linalg.eigvals(B[i, j])
                if np.min(ev.real) < self.min_decay:
                    raise ModelError(
                        f"B[{i},{j}] has an eigenvalue with real part below {self.min_decay:g}"
                    )
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def order(self) -> int:
        return self.A.shape[2]


Kernel = Union[ScalarExpKernel, MatrixExpKernel]


@dataclass(frozen=True)
class ModelParams:
    """Full model parameter set.

    ``mark_weights`` (d, d, d') carries the linear mark form m_ijl and is
    present exactly when the model is marked. ``beta_nuisance`` flags decay
    entries with no defined value (edges whose excitation is identically
    zero); flagged entries are never consumed by intensity evaluation and
    serialize as "*".
    """

    mu: np.ndarray
    kernel: Kernel
    mark_weights: Optional[np.ndarray] = None
    beta_nuisance: Optional[np.ndarray] = None
    bounds: ParamBounds = field(default_factory=ParamBounds)

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, float))
        d = self.kernel.dim
        if mu.shape != (d,):
            raise ModelError(f"mu must have shape ({d},)")
        if np.any(mu <= 0):
            raise ModelError("all baselines mu_i must be positive")
        object.__setattr__(self, "mu", _frozen(mu))

        scalar = isinstance(self.kernel, ScalarExpKernel)
        if self.mark_weights is not None:
            m = np.asarray(self.mark_weights, float)
            if m.ndim != 3 or m.shape[:2] != (d, d) or m.shape[2] < 1:
                raise ModelError("mark_weights must be (d, d, d') with d' >= 1")
            if np.any(m < 0):
                raise ModelError("mark weights must be non-negative")
            if scalar and self.kernel.alpha is not None:
                raise ModelError("marked scalar models take weights from marks, not alpha")
            object.__setattr__(self, "mark_weights", _frozen(m))
        elif scalar and self.kernel.alpha is None:
            raise ModelError("unmarked scalar models require alpha")

        if self.beta_nuisance is not None:
            if not scalar:
                raise ModelError("beta_nuisance applies to scalar kernels only")
            mask = np.asarray(self.beta_nuisance, bool)
            if mask.shape != (d, d):
                raise ModelError(f"beta_nuisance must be ({d}, {d})")
            active = self._edge_weights_active()
            if np.any(mask & active):
                raise ModelError("nuisance-flagged beta on an edge with non-zero excitation")
            object.__setattr__(self, "beta_nuisance", _frozen(mask, dtype=bool))
        if scalar:
            active = self._edge_weights_active()
            mask = self.beta_nuisance if self.beta_nuisance is not None else np.zeros((d, d), bool)
            if np.any(active & ~mask & (self.kernel.beta <= 0)):
                raise ModelError("beta must be positive on every excited edge")

    def _edge_weights_active(self) -> np.ndarray:
        if self.mark_weights is not None:
            return np.any(self.mark_weights > 0, axis=2)
        if isinstance(self.kernel, ScalarExpKernel) and self.kernel.alpha is not None:
            return self.kernel.alpha > 0
        return np.ones((self.dim, self.dim), bool)

    @property
    def dim(self) -> int:
        return self.kernel.dim

    @property
    def mark_dim(self) -> int:
        return 0 if self.mark_weights is None else self.mark_weights.shape[2]

    @property
    def is_scalar(self) -> bool:
        return isinstance(self.kernel, ScalarExpKernel)

    def edge_weights(self, mark: Optional[np.ndarray]) -> np.ndarray:
        """Excitation weight matrix w_ij for an event carrying ``mark``."""
        if self.mark_weights is not None:
            if mark is None:
                raise ModelError("marked model requires an event mark")
            x = check_simplex(mark)
            if x.shape[0] != self.mark_dim:
                raise ModelError("mark dimension mismatch")
            return self.mark_weights @ x
        if isinstance(self.kernel, ScalarExpKernel):
            return np.array(self.kernel.alpha)
        return np.ones((self.dim, self.dim))


@dataclass(frozen=True)
class ExcitationState:
    """Markov state (t, E, last mark) driving exact intensity evaluation.

    For scalar kernels E is (d, d) and stores the alpha-weighted decayed
    sums directly; for matrix kernels E is (d, d, p, p) per the integral
    definition of the elementary excitation process.
    """

    t: float
    E: np.ndarray
    x_last: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "E", _frozen(self.E))
        if self.x_last is not None:
            object.__setattr__(self, "x_last", _frozen(self.x_last))


def empty_state(params: ModelParams) -> ExcitationState:
    """State at t = 0 with empty history; marked models start at the barycenter."""
    d = params.dim
    if params.is_scalar:
        E = np.zeros((d, d))
    else:
        p = params.kernel.order
        E = np.zeros((d, d, p, p))
    x0 = None
    if params.mark_dim:
        x0 = np.full(params.mark_dim, 1.0 / params.mark_dim)
    return ExcitationState(0.0, E, x0)


def decay_state(state: ExcitationState, dt: float, params: ModelParams) -> ExcitationState:
    """Propagate the excitation state over a jump-free interval of length dt."""
    if dt < 0:
        raise ModelError("decay duration must be non-negative")
    if dt == 0:
        return state
    if params.is_scalar:
        E = state.E * np.exp(-params.kernel.beta * dt)
    else:
        B = params.kernel.B
        d = params.dim
        E = np.empty_like(state.E)
        for i in range(d):
            for j in range(d):
                E[i, j] = matrix_exponential(-dt * B[i, j]) @ state.E[i, j]
    return ExcitationState(state.t + dt, E, state.x_last)


def apply_jump(
    state: ExcitationState, j: int, mark: Optional[np.ndarray], params: ModelParams
) -> ExcitationState:
    """Register an event of component ``j`` (0-based) at the current time."""
    d = params.dim
    if not 0 <= j < d:
        raise ModelError(f"component {j} out of range for dimension {d}")
    if params.mark_dim:
        if mark is None:
            raise ModelError("marked model requires an event mark")
        mark = check_simplex(mark)
        if mark.shape[0] != params.mark_dim:
            raise ModelError("mark dimension mismatch")
    elif mark is not None:
        raise ModelError("unmarked model got an event mark")
    w = params.edge_weights(mark)
    E = np.array(state.E)
    if params.is_scalar:
        E[:, j] += w[:, j]
    else:
        p = params.kernel.order
        eye = np.eye(p)
        for i in range(d):
            E[i, j] += w[i, j] * eye
    return ExcitationState(state.t, E, mark if params.mark_dim else None)


def intensity(state: ExcitationState, params: ModelParams) -> np.ndarray:
    """Conditional intensity vector at the state's time (left limit)."""
    if params.is_scalar:
        return params.mu + state.E.sum(axis=1)
    return params.mu + np.einsum("ijkl,ijkl->i", params.kernel.A, state.E)


def matrix_exponential(M: np.ndarray) -> np.ndarray:
    """exp(M) by scaling-and-squaring with a diagonal [10/10] Pade approximant."""
    M = np.asarray(M, float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ModelError("matrix_exponential needs a square matrix")
    p = M.shape[0]
    norm = np.linalg.norm(M, 1)
    s = 0
    if norm > 0.25:
        s = int(math.ceil(math.log2(norm / 0.25)))
        M = M / (2.0 ** s)
    # c[k] = (2m - k)! m! / ((2m)! k! (m - k)!) for m = 10
    m = 10
    c = np.empty(m + 1)
    c[0] = 1.0
    for k in range(m):
        c[k + 1] = c[k] * (m - k) / ((2 * m - k) * (k + 1))
    eye = np.eye(p)
    M2 = M @ M
    # split p(M) = V + U with V the even and U the odd part, so p(-M) = V - U
    even = eye * c[0]
    odd = eye * c[1]
    acc = eye
    for k in range(2, m + 1, 2):
        acc = acc @ M2
        even = even + c[k] * acc
        if k + 1 <= m:
            odd = odd + c[k + 1] * acc
    U = M @ odd
    V = even
    F = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        F = F @ F
    return F


def branching_matrix(
    params: ModelParams, mark_mean: Optional[np.ndarray] = None
) -> np.ndarray:
    """Expected offspring matrix Phi; spectral radius < 1 is the stability gate."""
    d = params.dim
    if params.mark_dim:
        if mark_mean is None:
            raise ModelError("marked model requires the stationary mark mean")
        mark_mean = check_simplex(mark_mean)
        w = params.mark_weights @ mark_mean
    elif params.is_scalar:
        w = np.array(params.kernel.alpha)
    else:
        w = np.ones((d, d))
    if params.is_scalar:
        beta = params.kernel.beta
        mask = params.beta_nuisance
        safe = np.where(beta > 0, beta, 1.0)
        phi = np.where(w > 0, w / safe, 0.0)
        if mask is not None:
            phi = np.where(mask, 0.0, phi)
        return phi
    phi = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            Binv = np.linalg.inv(params.kernel.B[i, j])
            phi[i, j] = w[i, j] * float(np.sum(params.kernel.A[i, j] * Binv))
    return phi


def spectral_radius(phi: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest eigenvalue modulus of a non-negative square matrix.

    Power iteration from a deterministic positive start; falls back to a
    full eigen-decomposition for d <= 16 if the iteration stalls (periodic
    or reducible matrices).
    """
    phi = np.atleast_2d(np.asarray(phi, float))
    if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
        raise ModelError("spectral_radius needs a square matrix")
    if np.any(phi < 0):
        raise ModelError("spectral_radius expects a non-negative matrix")
    d = phi.shape[0]
    v = np.full(d, 1.0 / math.sqrt(d))
    r_prev = None
    for _ in range(max_iter):
        w = phi @ v
        r = float(np.linalg.norm(w))
        if r == 0.0:
            return 0.0
        v = w / r
        if r_prev is not None and abs(r - r_prev) <= tol * max(1.0, r):
            return r
        r_prev = r
    if d <= 16:
        return float(np.max(np.abs(np.linalg.eigvals(phi))))
    raise StabilityError("power iteration did not converge within 10000 iterations")


def stationary_mean_intensity(
    params: ModelParams, mark_mean: Optional[np.ndarray] = None
) -> np.ndarray:
    """First-moment identity: solve (I - Phi) lam_bar = mu (requires stability)."""
    phi = branching_matrix(params, mark_mean)
    if spectral_radius(phi) >= 1.0:
        raise StabilityError("branching matrix spectral radius >= 1")
    return np.linalg.solve(np.eye(params.dim) - phi, params.mu)
