"""Monte Carlo harness: seeded trials, per-coordinate selection/error
metrics, and the delimited report with figures.

Trial k simulates with seed base_seed + k; every method within a trial
consumes the same path. Aggregation reduces completed trials in index
order, so reports are byte-identical for any parallelism degree.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .layout import CoordinateLayout
from .model import StabilityError
from .optimize import OptimizeError, elastic_net_ls
from .po import FitResult, po_estimate, qmle_estimate
from .simulate import EventLog, SimulationBudgetError, simulate

ELASTIC_NET_ZERO_SNAP = 1e-8  # zero convention of the baseline comparison


def layout_for(config: ExperimentConfig) -> CoordinateLayout:
    p = config.params
    return CoordinateLayout(p.dim, p.mark_dim, p.bounds)


def truth_vector(config: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    """Truth coordinates and the truth-side nuisance mask ('*' decays)."""
    layout = layout_for(config)
    vec = layout.pack(config.params)
    nuis = np.zeros(layout.size, bool)
    if config.params.beta_nuisance is not None:
        nuis[layout.beta_slice] = config.params.beta_nuisance.ravel()
    vec = np.where(nuis, np.nan, vec)
    return vec, nuis


def fixed_coordinate_mask(config: ExperimentConfig) -> np.ndarray:
    layout = layout_for(config)
    mask = np.zeros(layout.size, bool)
    if config.fix_beta:
        mask[layout.beta_slice] = True
    return mask


def elastic_net_fit(log: EventLog, config: ExperimentConfig) -> FitResult:
    """Elastic-net baseline wrapped as a FitResult over the full layout.

    Estimates below the baseline's zero tolerance snap to exact zero; the
    given decays fill the beta block, recorded as fixed.
    """
    layout = layout_for(config)
    beta_given = np.array(config.params.kernel.beta)
    x, diag = elastic_net_ls(
        log,
        config.elastic_net.c,
        config.elastic_net.rho,
        beta_given,
        dim=layout.dim,
        bounds=config.params.bounds,
    )
    d = layout.dim
    alpha = x[d:]
    alpha = np.where(np.abs(alpha) < ELASTIC_NET_ZERO_SNAP, 0.0, alpha)
    vec = np.empty(layout.size)
    vec[layout.mu_slice] = x[:d]
    vec[layout.weight_slice] = alpha
    vec[layout.beta_slice] = beta_given.ravel()
    fixed = np.zeros(layout.size, bool)
    fixed[layout.beta_slice] = True
    return FitResult(
        method="elastic_net",
        horizon=log.horizon,
        layout=layout,
        step1=vec,
        step1_diag=diag,
        fixed_mask=fixed,
    )


def fit_method(log: EventLog, config: ExperimentConfig, method: str) -> FitResult:
    """Fit one method on one log (the CLI's estimate path)."""
    layout = layout_for(config)
    fix = np.array(config.params.kernel.beta) if config.fix_beta else None
    if method == "qmle":
        return qmle_estimate(log, layout, fix_beta_values=fix, restarts=config.restarts,
                             rng=np.random.default_rng(config.base_seed) if config.restarts else None)
    if method == "po":
        return po_estimate(log, layout, config.hyper, fix_beta_values=fix,
                           restarts=config.restarts,
                           rng=np.random.default_rng(config.base_seed) if config.restarts else None)
    if method == "elastic_net":
        return elastic_net_fit(log, config)
    raise ValueError(f"unknown method {method!r}")


def _mc_trial(args) -> tuple[int, dict, dict]:
    config, T, k = args
    estimates: dict = {}
    failures: dict = {}
    rng = np.random.default_rng(config.base_seed + k)
    try:
        log = simulate(
            config.params,
            config.mark_kernel,
            T,
            rng,
            max_expected_events=config.max_expected_events,
        )
    except (StabilityError, SimulationBudgetError) as exc:
        return k, {}, {m: f"simulate: {exc}" for m in config.methods}
    pending = list(config.methods)
    if "po" in pending and "qmle" in pending:
        # the pipeline's first stage IS the plain QMLE: one solve serves both
        try:
            fit = fit_method(log, config, "po")
            estimates["po"] = fit.estimate
            estimates["qmle"] = fit.step1
        except (OptimizeError, StabilityError, FloatingPointError, np.linalg.LinAlgError) as exc:
            failures["po"] = failures["qmle"] = str(exc)
        pending = [m for m in pending if m not in ("po", "qmle")]
    for method in pending:
        try:
            estimates[method] = fit_method(log, config, method).estimate
        except (OptimizeError, StabilityError, FloatingPointError, np.linalg.LinAlgError) as exc:
            failures[method] = str(exc)
    return k, estimates, failures


@dataclass(frozen=True)
class McCell:
    """Per (method, horizon) aggregate over completed trials."""

    zero_rate: np.ndarray
    mse: np.ndarray           # NaN where no true value exists (exported "*")
    errors: np.ndarray        # (n_ok, n_error_coords) sqrt(T)-scaled
    error_coords: tuple
    n_failed: int

    def equals(self, other: "McCell") -> bool:
        return (
            np.array_equal(self.zero_rate, other.zero_rate)
            and np.array_equal(self.mse, other.mse, equal_nan=True)
            and np.array_equal(self.errors, other.errors)
            and self.error_coords == other.error_coords
            and self.n_failed == other.n_failed
        )


@dataclass(frozen=True)
class McReport:
    coord_names: tuple
    truth: np.ndarray
    truth_nuisance: np.ndarray
    fixed_mask: np.ndarray
    trials: int
    base_seed: int
    methods: tuple
    horizons: tuple
    hyper: Optional[dict]
    cells: dict

    def cell(self, method: str, T: float) -> McCell:
        return self.cells[(method, float(T))]

    def equals(self, other: "McReport") -> bool:
        if (
            self.coord_names != other.coord_names
            or not np.array_equal(self.truth, other.truth, equal_nan=True)
            or not np.array_equal(self.truth_nuisance, other.truth_nuisance)
            or not np.array_equal(self.fixed_mask, other.fixed_mask)
            or self.trials != other.trials
            or self.base_seed != other.base_seed
            or self.methods != other.methods
            or self.horizons != other.horizons
            or set(self.cells) != set(other.cells)
        ):
            return False
        return all(self.cells[key].equals(other.cells[key]) for key in self.cells)


def _aggregate(estimates: list, T: float, truth: np.ndarray, report_cols: np.ndarray,
               names: tuple, n_failed: int) -> McCell:
    est = np.asarray(estimates, float) if estimates else np.empty((0, truth.size))
    n_ok = est.shape[0]
    zero_rate = (
        np.mean(est == 0.0, axis=0) if n_ok else np.zeros(truth.size)
    )
    mse = np.full(truth.size, np.nan)
    defined = ~np.isnan(truth)
    if n_ok:
        diff = est[:, defined] - truth[defined]
        mse[defined] = np.mean(diff * diff, axis=0)
    mse[~report_cols & defined] = np.nan  # fixed coordinates are not estimates
    cols = report_cols & defined
    errors = (
        math.sqrt(T) * (est[:, cols] - truth[cols]) if n_ok else np.empty((0, int(cols.sum())))
    )
    return McCell(
        zero_rate=zero_rate,
        mse=mse,
        errors=errors,
        error_coords=tuple(np.asarray(names)[cols].tolist()),
        n_failed=n_failed,
    )


def run_mc(config: ExperimentConfig, parallel: int = 1) -> McReport:
    """Simulate and fit ``trials`` paths per horizon; aggregate exactly."""
    layout = layout_for(config)
    names = tuple(layout.names())
    truth, truth_nuis = truth_vector(config)
    fixed = fixed_coordinate_mask(config)
    report_cols = ~fixed
    cells: dict = {}
    for T in config.horizons:
        tasks = [(config, T, k) for k in range(config.trials)]
        if parallel > 1:
            with ProcessPoolExecutor(max_workers=parallel) as pool:
                raw = list(pool.map(_mc_trial, tasks, chunksize=max(1, len(tasks) // (4 * parallel))))
        else:
            raw = [_mc_trial(t) for t in tasks]
        raw.sort(key=lambda r: r[0])
        for method in config.methods:
            ests = [r[1][method] for r in raw if method in r[1]]
            n_failed = sum(1 for r in raw if method in r[2])
            cells[(method, float(T))] = _aggregate(
                ests, T, truth, report_cols, names, n_failed
            )
    return McReport(
        coord_names=names,
        truth=truth,
        truth_nuisance=truth_nuis,
        fixed_mask=fixed,
        trials=config.trials,
        base_seed=config.base_seed,
        methods=tuple(config.methods),
        horizons=tuple(config.horizons),
        hyper=config.hyper.to_dict(),
        cells=cells,
    )


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _fname_T(T: float) -> str:
    return str(int(T)) if float(T).is_integer() else _fmt(T).replace(".", "p")


def export_report(report: McReport, outdir, figures: bool = True) -> list:
    """Write zero_rates.csv, mse.csv, errors_{method}_{T}.csv, report.json
    and (optionally) histogram figures; returns the written paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    path = outdir / "zero_rates.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method,T,coordinate,zero_rate\n")
        for method in report.methods:
            for T in report.horizons:
                cell = report.cell(method, T)
                for k, name in enumerate(report.coord_names):
                    fh.write(f"{method},{_fmt(T)},{name},{_fmt(cell.zero_rate[k])}\n")
    written.append(path)

    path = outdir / "mse.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method,T,coordinate,mse\n")
        for method in report.methods:
            for T in report.horizons:
                cell = report.cell(method, T)
                for k, name in enumerate(report.coord_names):
                    v = cell.mse[k]
                    fh.write(f"{method},{_fmt(T)},{name},{'*' if np.isnan(v) else _fmt(v)}\n")
    written.append(path)

    for method in report.methods:
        for T in report.horizons:
            cell = report.cell(method, T)
            path = outdir / f"errors_{method}_{_fname_T(T)}.csv"
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(",".join(cell.error_coords) + "\n")
                for row in cell.errors:
                    fh.write(",".join(_fmt(v) for v in row) + "\n")
            written.append(path)

    meta = {
        "trials": report.trials,
        "base_seed": report.base_seed,
        "methods": list(report.methods),
        "horizons": [float(T) for T in report.horizons],
        "coordinates": list(report.coord_names),
        "truth": {
            name: ("*" if report.truth_nuisance[k] else float(report.truth[k]))
            for k, name in enumerate(report.coord_names)
        },
        "fixed": [
            name for k, name in enumerate(report.coord_names) if report.fixed_mask[k]
        ],
        "hyper": report.hyper,
        "failures": {
            f"{method}@{_fmt(T)}": report.cell(method, T).n_failed
            for method in report.methods
            for T in report.horizons
        },
    }
    path = outdir / "report.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    written.append(path)

    if figures:
        from . import plots  # matplotlib import deferred to the report path

        written += plots.render_error_histograms(report, outdir)
    return written


def parse_report(outdir) -> McReport:
    """Rebuild an McReport from an export directory (exact round-trip)."""
    outdir = Path(outdir)
    with open(outdir / "report.json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    names = tuple(meta["coordinates"])
    idx = {name: k for k, name in enumerate(names)}
    truth = np.array(
        [np.nan if meta["truth"][n] == "*" else float(meta["truth"][n]) for n in names]
    )
    truth_nuis = np.array([meta["truth"][n] == "*" for n in names])
    fixed = np.zeros(len(names), bool)
    for n in meta["fixed"]:
        fixed[idx[n]] = True
    methods = tuple(meta["methods"])
    horizons = tuple(float(t) for t in meta["horizons"])
    zero = {}
    with open(outdir / "zero_rates.csv", "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            method, T, name, val = line.strip().split(",")
            zero[(method, float(T), name)] = float(val)
    mse = {}
    with open(outdir / "mse.csv", "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            method, T, name, val = line.strip().split(",")
            mse[(method, float(T), name)] = np.nan if val == "*" else float(val)
    cells = {}
    for method in methods:
        for T in horizons:
            with open(outdir / f"errors_{method}_{_fname_T(T)}.csv", "r", encoding="utf-8") as fh:
                header = fh.readline().strip()
                cols = tuple(header.split(",")) if header else ()
                rows = [
                    [float(v) for v in line.strip().split(",")]
                    for line in fh
                    if line.strip()
                ]
            errors = np.asarray(rows, float) if rows else np.empty((0, len(cols)))
            cells[(method, T)] = McCell(
                zero_rate=np.array([zero[(method, T, n)] for n in names]),
                mse=np.array([mse[(method, T, n)] for n in names]),
                errors=errors,
                error_coords=cols,
                n_failed=int(meta["failures"][f"{method}@{_fmt(T)}"]),
            )
    return McReport(
        coord_names=names,
        truth=truth,
        truth_nuisance=truth_nuis,
        fixed_mask=fixed,
        trials=int(meta["trials"]),
        base_seed=int(meta["base_seed"]),
        methods=methods,
        horizons=horizons,
        hyper=meta.get("hyper"),
        cells=cells,
    )
