"""Three-step sparse estimation: full QMLE, adaptive-weight thresholding,
and refit on the selected model.

Step 2 minimizes, coordinate by coordinate over the non-negative box
segment,

    (x - first_stage_j)^2 + kappa_j |x|^q,   kappa_j = a_T |e_T + first_stage_j|^(-gamma)

with a_T = T^(-(1+a)/2) and e_T = T^(-1/2). Selected coordinates are
bitwise zero: there is no "almost zero" limbo anywhere in the pipeline.
Step 3 re-runs the box-constrained maximization with the selected zeros
pinned; decay coordinates whose whole edge was zeroed become nuisance
(no defined value) and carry the step-1 value, flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ._kernels import loglik_point_kernel
from .layout import CoordinateLayout
from .likelihood import _event_features
from .model import ModelError
from .optimize import BoxProblem, SolveDiagnostics, maximize_box
from .simulate import EventLog


@dataclass(frozen=True)
class PoHyper:
    """Penalty schedule: exponent q, weight exponent gamma, rate exponent a."""

    q: float = 1.0
    gamma: float = 1.0
    a: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ModelError("q must lie in (0, 1]")
        if self.gamma <= -(1.0 - self.q):
            raise ModelError("gamma must exceed -(1 - q)")
        if not 0.0 < self.a < 1.0 - self.q + self.gamma:
            raise ModelError("a must lie in (0, 1 - q + gamma)")

    def alpha_t(self, T: float) -> float:
        return T ** (-(1.0 + self.a) / 2.0)

    def epsilon_t(self, T: float) -> float:
        return T ** -0.5

    def kappa(self, first_stage: np.ndarray, T: float) -> np.ndarray:
        """Adaptive penalty weights from the first-stage estimates."""
        if T <= 0:
            raise ModelError("kappa schedule needs T > 0")
        first_stage = np.asarray(first_stage, float)
        return self.alpha_t(T) * np.abs(self.epsilon_t(T) + first_stage) ** (-self.gamma)

    def to_dict(self) -> dict:
        return {"q": self.q, "gamma": self.gamma, "a": self.a}


def threshold_coordinate(first: float, kappa: float, q: float, upper: float) -> float:
    """Exact minimizer of (x - first)^2 + kappa x^q over [0, upper], ties to 0."""
    if kappa < 0 or upper < 0:
        raise ModelError("kappa and upper must be non-negative")
    if kappa == 0.0:
        return float(min(max(first, 0.0), upper))
    if q == 1.0:
        x = first - kappa / 2.0
        if x <= 0.0:
            return 0.0
        return float(min(x, upper))
    if first <= 0.0:
        return 0.0
    # stationarity g(x) = 2(x - first) + q kappa x^(q-1); g is decreasing then
    # increasing with minimum at xstar, so an interior local min (the larger
    # root) exists iff g(xstar) < 0
    xstar = (q * (1.0 - q) * kappa / 2.0) ** (1.0 / (2.0 - q))

    def g(x):
        return 2.0 * (x - first) + q * kappa * x ** (q - 1.0)

    def f(x):
        return (x - first) ** 2 + kappa * x ** q

    cands = []
    if xstar < first and g(xstar) < 0.0:
        lo_x, hi_x = xstar, first
        x = first
        for _ in range(100):
            gx = g(x)
            if gx < 0.0:
                lo_x = x
            else:
                hi_x = x
            gpx = 2.0 + q * (q - 1.0) * kappa * x ** (q - 2.0)
            x_new = x - gx / gpx if gpx > 0 else 0.5 * (lo_x + hi_x)
            if not lo_x < x_new < hi_x:
                x_new = 0.5 * (lo_x + hi_x)
            if abs(x_new - x) <= 1e-15 * max(1.0, x):
                x = x_new
                break
            x = x_new
        cands.append(min(x, upper))
    f0 = f(0.0)
    best_x, best_f = 0.0, f0
    for c in cands:
        fc = f(c)
        if fc < best_f:
            best_x, best_f = c, fc
    if best_f >= f0:
        return 0.0
    return float(best_x)


def step2_threshold(
    theta0_tilde: np.ndarray,
    nu0_tilde: Optional[np.ndarray],
    T: float,
    hyper: PoHyper,
    upper,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Coordinate-wise exact minimization of the penalized quadratic.

    Returns (theta_hat, nu_hat, J0, K0) where J0/K0 index the bitwise-zero
    coordinates of each block.
    """
    theta0_tilde = np.atleast_1d(np.asarray(theta0_tilde, float))
    nu0_tilde = (
        np.atleast_1d(np.asarray(nu0_tilde, float)) if nu0_tilde is not None else np.empty(0)
    )
    up_theta = np.broadcast_to(np.asarray(upper, float), theta0_tilde.shape)
    kap_theta = hyper.kappa(theta0_tilde, T)
    theta_hat = np.array(
        [
            threshold_coordinate(t, k, hyper.q, u)
            for t, k, u in zip(theta0_tilde, kap_theta, up_theta)
        ]
    )
    if nu0_tilde.size:
        up_nu = np.broadcast_to(np.asarray(upper, float), nu0_tilde.shape)
        kap_nu = hyper.kappa(nu0_tilde, T)
        nu_hat = np.array(
            [
                threshold_coordinate(t, k, hyper.q, u)
                for t, k, u in zip(nu0_tilde, kap_nu, up_nu)
            ]
        )
    else:
        nu_hat = np.empty(0)
    J0 = np.flatnonzero(theta_hat == 0.0)
    K0 = np.flatnonzero(nu_hat == 0.0)
    return theta_hat, nu_hat, J0, K0


@dataclass(frozen=True)
class FitResult:
    """Estimates per pipeline stage plus selection and nuisance bookkeeping.

    ``step1``/``step3`` are full coordinate vectors over ``layout``;
    ``zero_set`` indexes the weight block; ``nuisance_mask`` flags layout
    coordinates with no defined value under the selection (they carry the
    step-1 value for reporting). ``fixed_mask`` records config-level pins
    (e.g. decays given in the elastic-net comparison).
    """

    method: str
    horizon: float
    layout: CoordinateLayout
    step1: np.ndarray
    step1_diag: Optional[SolveDiagnostics] = None
    step2_theta: Optional[np.ndarray] = None
    zero_set: Optional[np.ndarray] = None
    step3: Optional[np.ndarray] = None
    step3_diag: Optional[SolveDiagnostics] = None
    nuisance_mask: Optional[np.ndarray] = None
    hyper: Optional[PoHyper] = None
    fixed_mask: Optional[np.ndarray] = None

    @property
    def estimate(self) -> np.ndarray:
        """Final estimate of the method (step 3 for the full pipeline)."""
        return self.step3 if self.step3 is not None else self.step1

    @property
    def nuisance(self) -> np.ndarray:
        if self.nuisance_mask is None:
            return np.zeros(self.layout.size, bool)
        return self.nuisance_mask

    def zero_names(self) -> list[str]:
        if self.zero_set is None:
            return []
        names = self.layout.names()
        off = self.layout.weight_slice.start
        return [names[off + int(j)] for j in self.zero_set]

    def to_dict(self) -> dict:
        names = self.layout.names()
        nuis = self.nuisance

        def coord_map(vec):
            return {
                name: ("*" if nuis[k] else float(vec[k])) for k, name in enumerate(names)
            }

        out = {
            "method": self.method,
            "horizon": self.horizon,
            "model": {"dim": self.layout.dim, "mark_dim": self.layout.mark_dim},
            "estimate": coord_map(self.estimate),
            "step1": {
                "coordinates": {n: float(v) for n, v in zip(names, self.step1)},
                "diagnostics": self.step1_diag.to_dict() if self.step1_diag else None,
            },
        }
        if self.hyper is not None:
            out["hyper"] = self.hyper.to_dict()
        if self.step2_theta is not None:
            wnames = names[self.layout.weight_slice]
            out["step2"] = {
                "theta": {n: float(v) for n, v in zip(wnames, self.step2_theta)},
                "zero_set": self.zero_names(),
            }
        if self.step3 is not None:
            out["step3"] = {
                "coordinates": coord_map(self.step3),
                "nuisance": [names[k] for k in np.flatnonzero(nuis)],
                "diagnostics": self.step3_diag.to_dict() if self.step3_diag else None,
            }
        if self.fixed_mask is not None and np.any(self.fixed_mask):
            out["fixed"] = [names[k] for k in np.flatnonzero(self.fixed_mask)]
        return out


def _qmle_objective(log: EventLog, layout: CoordinateLayout):
    """Fast closure evaluating l(1) and its gradient on raw coordinate vectors."""
    params_proto = layout.unpack(layout.default_start(log.n_events, max(log.horizon, 1.0)))
    times, comps, X, _ = _event_features(log, params_proto)
    d = layout.dim
    qf = layout.weight_feats
    T = float(log.horizon)
    mu_sl, w_sl, b_sl = layout.mu_slice, layout.weight_slice, layout.beta_slice

    def fun(vec):
        vec = np.ascontiguousarray(vec, float)
        mu = vec[mu_sl]
        W = vec[w_sl].reshape(d, d, qf)
        beta = vec[b_sl].reshape(d, d)
        ok, value, g_mu, g_w, g_beta = loglik_point_kernel(times, comps, X, T, mu, W, beta)
        if not ok:
            return -math.inf, np.zeros(layout.size)
        return value, np.concatenate([g_mu, g_w.ravel(), g_beta.ravel()])

    return fun


def step1_qmle(
    log: EventLog,
    layout: CoordinateLayout,
    x0: Optional[np.ndarray] = None,
    *,
    fixed_mask: Optional[np.ndarray] = None,
    fixed_values: Optional[np.ndarray] = None,
    restarts: int = 0,
    rng: Optional[np.random.Generator] = None,
    **solver_opts,
) -> Tuple[np.ndarray, SolveDiagnostics]:
    """First-stage estimator: box-constrained QMLE over all coordinates.

    ``restarts`` adds that many random interior starts (requires ``rng``)
    on top of the single default start; the best objective wins.
    """
    fun = _qmle_objective(log, layout)
    problem = BoxProblem(
        fun=fun,
        lower=layout.lower(),
        upper=layout.upper(),
        fixed_mask=fixed_mask,
        fixed_values=fixed_values,
    )
    starts = [x0 if x0 is not None else layout.default_start(log.n_events, log.horizon)]
    if restarts:
        if rng is None:
            raise ModelError("random restarts need an rng")
        lo, hi = layout.lower(), np.minimum(layout.upper(), 5.0)
        for _ in range(restarts):
            starts.append(lo + (hi - lo) * rng.random(layout.size))
    best = None
    for s in starts:
        x, diag = maximize_box(problem, s, **solver_opts)
        value = fun(x)[0]
        if best is None or value > best[0]:
            best = (value, x, diag)
    return best[1], best[2]


def step3_refit(
    log: EventLog,
    layout: CoordinateLayout,
    selection: Sequence[int],
    step1: np.ndarray,
    *,
    base_fixed_mask: Optional[np.ndarray] = None,
    base_fixed_values: Optional[np.ndarray] = None,
    **solver_opts,
) -> Tuple[np.ndarray, np.ndarray, SolveDiagnostics]:
    """Refit with the selected weight coordinates pinned to exactly zero.

    Decays on edges whose every weight is selected zero are nuisance: they
    are pinned at the step-1 value, excluded from the free layout, and
    flagged in the returned mask.
    """
    step1 = np.asarray(step1, float)
    fixed_mask = (
        np.array(base_fixed_mask, bool)
        if base_fixed_mask is not None
        else np.zeros(layout.size, bool)
    )
    fixed_values = (
        np.array(base_fixed_values, float)
        if base_fixed_values is not None
        else np.zeros(layout.size)
    )
    w_off = layout.weight_slice.start
    for j in selection:
        k = w_off + int(j)
        fixed_mask[k] = True
        fixed_values[k] = 0.0
    nuisance = np.zeros(layout.size, bool)
    sel_global = {w_off + int(j) for j in selection}
    for i in range(layout.dim):
        for j in range(layout.dim):
            if all(k in sel_global for k in layout.edge_weight_indices(i, j)):
                bk = layout.beta_index(i, j)
                if base_fixed_mask is None or not fixed_mask[bk]:
                    fixed_mask[bk] = True
                    fixed_values[bk] = step1[bk]
                nuisance[bk] = True
    start = np.array(step1)
    start[fixed_mask] = fixed_values[fixed_mask]
    fun = _qmle_objective(log, layout)
    problem = BoxProblem(
        fun=fun,
        lower=layout.lower(),
        upper=layout.upper(),
        fixed_mask=fixed_mask,
        fixed_values=fixed_values,
    )
    x, diag = maximize_box(problem, start, **solver_opts)
    return x, nuisance, diag


def po_estimate(
    log: EventLog,
    layout: CoordinateLayout,
    hyper: PoHyper,
    *,
    x0: Optional[np.ndarray] = None,
    fix_beta_values: Optional[np.ndarray] = None,
    restarts: int = 0,
    rng: Optional[np.random.Generator] = None,
    **solver_opts,
) -> FitResult:
    """Run the full three-step pipeline on one event log."""
    if log.horizon <= 0:
        raise ModelError("estimation needs a positive horizon")
    base_mask = base_vals = None
    if fix_beta_values is not None:
        base_mask = np.zeros(layout.size, bool)
        base_vals = np.zeros(layout.size)
        base_mask[layout.beta_slice] = True
        base_vals[layout.beta_slice] = np.broadcast_to(
            np.asarray(fix_beta_values, float), (layout.dim, layout.dim)
        ).ravel()
    step1, diag1 = step1_qmle(
        log,
        layout,
        x0,
        fixed_mask=base_mask,
        fixed_values=base_vals,
        restarts=restarts,
        rng=rng,
        **solver_opts,
    )
    theta_tilde = step1[layout.weight_slice]
    upper = layout.upper()[layout.weight_slice]
    theta_hat, _, J0, _ = step2_threshold(theta_tilde, None, log.horizon, hyper, upper)
    step3, nuisance, diag3 = step3_refit(
        log,
        layout,
        J0,
        step1,
        base_fixed_mask=base_mask,
        base_fixed_values=base_vals,
        **solver_opts,
    )
    return FitResult(
        method="po",
        horizon=log.horizon,
        layout=layout,
        step1=step1,
        step1_diag=diag1,
        step2_theta=theta_hat,
        zero_set=J0,
        step3=step3,
        step3_diag=diag3,
        nuisance_mask=nuisance,
        hyper=hyper,
        fixed_mask=base_mask,
    )


def qmle_estimate(
    log: EventLog,
    layout: CoordinateLayout,
    *,
    x0: Optional[np.ndarray] = None,
    fix_beta_values: Optional[np.ndarray] = None,
    restarts: int = 0,
    rng: Optional[np.random.Generator] = None,
    **solver_opts,
) -> FitResult:
    """Plain QMLE wrapped as a single-stage FitResult."""
    if log.horizon <= 0:
        raise ModelError("estimation needs a positive horizon")
    base_mask = base_vals = None
    if fix_beta_values is not None:
        base_mask = np.zeros(layout.size, bool)
        base_vals = np.zeros(layout.size)
        base_mask[layout.beta_slice] = True
        base_vals[layout.beta_slice] = np.broadcast_to(
            np.asarray(fix_beta_values, float), (layout.dim, layout.dim)
        ).ravel()
    step1, diag1 = step1_qmle(
        log,
        layout,
        x0,
        fixed_mask=base_mask,
        fixed_values=base_vals,
        restarts=restarts,
        rng=rng,
        **solver_opts,
    )
    return FitResult(
        method="qmle",
        horizon=log.horizon,
        layout=layout,
        step1=step1,
        step1_diag=diag1,
        fixed_mask=base_mask,
    )
