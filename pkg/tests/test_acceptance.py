"""Full-scale acceptance suite: one test per criterion, each printing a
PASS/FAIL line with the measured quantities (run pytest with -s or check
captured output).

The three Monte Carlo runs are desk-scale (100/100/50 trials at T = 3000)
and are shared across criteria through session fixtures.
"""

import filecmp
import math
import os

import numpy as np
import pytest
from numba import njit
from scipy import stats
from scipy.integrate import quad

import sparsehawkes as sh
from conftest import brute_force_intensity

pytestmark = pytest.mark.acceptance

PARALLEL = min(2, os.cpu_count() or 1)


def check(num: int, name: str, ok: bool, detail: str) -> None:
    print(f"\n[criterion {num:>2}] {'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


@pytest.fixture(scope="session")
def run3d(bench3d) -> sh.McReport:
    config = sh.ExperimentConfig(
        params=bench3d,
        mark_kernel=sh.NoMarks(),
        horizons=(3000.0,),
        trials=100,
        hyper=sh.PoHyper(q=1.0, gamma=1.0, a=0.5),
        methods=("qmle", "po"),
        base_seed=63_000,
    )
    return sh.run_mc(config, parallel=PARALLEL)


@pytest.fixture(scope="session")
def runtopic(topic1d, topic_kernel) -> sh.McReport:
    config = sh.ExperimentConfig(
        params=topic1d,
        mark_kernel=topic_kernel,
        horizons=(3000.0,),
        trials=100,
        hyper=sh.PoHyper(q=1.0, gamma=2.0, a=0.5),
        methods=("qmle", "po"),
        base_seed=401_000,
    )
    return sh.run_mc(config, parallel=PARALLEL)


@pytest.fixture(scope="session")
def runblocks(blocks4d) -> sh.McReport:
    config = sh.ExperimentConfig(
        params=blocks4d,
        mark_kernel=sh.NoMarks(),
        horizons=(3000.0,),
        trials=50,
        hyper=sh.PoHyper(q=1.0, gamma=1.0, a=0.5),
        methods=("po", "elastic_net"),
        base_seed=20_2603,
        fix_beta=True,
    )
    return sh.run_mc(config, parallel=PARALLEL)


TRUE_ZERO_3D = ["alpha_1_1", "alpha_1_3", "alpha_3_1", "alpha_3_2"]
TRUE_NONZERO_3D = ["alpha_1_2", "alpha_2_1", "alpha_2_2", "alpha_2_3", "alpha_3_3"]


def rates(report, method, names):
    idx = [list(report.coord_names).index(n) for n in names]
    return report.cell(method, 3000.0).zero_rate[idx]


def test_criterion_1_selection_consistency(run3d):
    zero = rates(run3d, "po", TRUE_ZERO_3D)
    nonzero = rates(run3d, "po", TRUE_NONZERO_3D)
    # the cap on false zeros is the aggregate mis-selection rate over the
    # true-nonzero coordinates (the per-coordinate reference values run up
    # to 3.33% on one coordinate, consistent only with an aggregate cap)
    ok = bool(np.all(zero >= 0.75) and np.all(zero <= 0.97) and nonzero.mean() <= 0.02)
    detail = (
        f"P-O true-zero rates {np.round(zero, 3).tolist()} each in [0.75, 0.97]; "
        f"true-nonzero aggregate rate {nonzero.mean():.3f} <= 0.02 "
        f"(per-coordinate {np.round(nonzero, 2).tolist()})"
    )
    check(1, "selection consistency", ok, detail)


def test_criterion_2_qmle_boundary_phenomenon(run3d):
    zero = rates(run3d, "qmle", TRUE_ZERO_3D)
    ok = bool(np.all(zero >= 0.40) and np.all(zero <= 0.68))
    check(2, "QMLE boundary rates", ok, f"{np.round(zero, 3).tolist()} in [0.40, 0.68]")


def test_criterion_3_topic_selection(runtopic):
    m2 = rates(runtopic, "po", ["m_1_1_2"])[0]
    m13 = rates(runtopic, "po", ["m_1_1_1", "m_1_1_3"])
    ok = bool(0.70 <= m2 <= 0.95 and np.all(m13 == 0.0))
    check(3, "topic selection", ok, f"m2 rate {m2:.3f} in [0.70, 0.95]; m1/m3 rates {m13.tolist()} == 0")


def test_criterion_4_mse_contrast(run3d, runtopic):
    names = list(run3d.coord_names)
    idx = [names.index(n) for n in TRUE_ZERO_3D]
    po = run3d.cell("po", 3000.0).mse[idx]
    qm = run3d.cell("qmle", 3000.0).mse[idx]
    coordwise = np.all(po <= 1.1 * qm)
    tnames = list(runtopic.coord_names)
    k = tnames.index("m_1_1_2")
    po_m2 = runtopic.cell("po", 3000.0).mse[k]
    qm_m2 = runtopic.cell("qmle", 3000.0).mse[k]
    ok = bool(coordwise and po_m2 < qm_m2)
    detail = (
        f"true-zero alpha mse ratios {np.round(po / qm, 3).tolist()} <= 1.1; "
        f"m2 mse P-O {po_m2:.2e} < QMLE {qm_m2:.2e}"
    )
    check(4, "MSE contrast", ok, detail)


def test_criterion_5_scaled_error_normality(run3d, runtopic):
    results = []
    for report in (run3d, runtopic):
        cell = report.cell("po", 3000.0)
        for k, name in enumerate(cell.error_coords):
            truth = report.truth[list(report.coord_names).index(name)]
            if truth == 0.0:
                continue
            p = stats.shapiro(cell.errors[:, k]).pvalue
            results.append((name, p))
    frac = np.mean([p > 0.01 for _, p in results])
    ok = bool(frac >= 0.80)
    failing = [n for n, p in results if p <= 0.01]
    check(
        5,
        "sqrt(T)-error normality",
        ok,
        f"{frac:.0%} of {len(results)} non-zero coordinates pass Shapiro-Wilk at p > 0.01 "
        f"(failing: {failing or 'none'})",
    )


def test_criterion_6_gradient_correctness(bench3d, topic1d, topic_kernel):
    rng = np.random.default_rng(606)
    worst = 0.0
    cases = []
    for s in range(10):
        cases.append((sh.simulate(bench3d, sh.NoMarks(), 150.0, np.random.default_rng(300 + s)), bench3d))
    for s in range(10):
        cases.append((sh.simulate(topic1d, topic_kernel, 40.0, np.random.default_rng(400 + s)), topic1d))
    for log, params in cases:
        layout = sh.layout_of(params)
        lo = layout.lower() + 0.05
        hi = np.minimum(layout.upper(), 2.0)
        for _ in range(50):
            point = lo + (hi - lo) * rng.random(layout.size)
            worst = max(worst, sh.gradient_check(log, layout.unpack(point)))
    ok = worst <= 1e-5
    check(6, "gradient correctness", ok, f"max deviation {worst:.3g} <= 1e-5 over 50 points x 20 logs")


def quadrature_loglik(log, params):
    ll = 0.0
    for n in range(log.n_events):
        lam = brute_force_intensity(log.times[n], log, params)
        ll += math.log(lam[int(log.components[n])])
    segs = np.concatenate([[0.0], log.times, [log.horizon]])
    for i in range(params.dim):
        for a, b in zip(segs[:-1], segs[1:]):
            if b > a:
                v, _ = quad(
                    lambda t: brute_force_intensity(t, log, params)[i],
                    a, b, epsabs=1e-12, epsrel=1e-12, limit=200,
                )
                ll -= v
    return ll


def test_criterion_7_compensator_exactness(bench3d, topic1d):
    rng = np.random.default_rng(707)
    worst = 0.0
    for s in range(10):
        times = np.sort(rng.uniform(0.05, 30.0, size=20))
        log = sh.EventLog(30.0, times, rng.integers(0, 3, size=20))
        worst = max(worst, abs(sh.loglik_point(log, bench3d).value - quadrature_loglik(log, bench3d)))
    for s in range(10):
        times = np.sort(rng.uniform(0.05, 15.0, size=15))
        marks = rng.dirichlet([2.0, 2.0, 5.0], size=15)
        log = sh.EventLog(15.0, times, np.zeros(15, np.int64), marks)
        worst = max(worst, abs(sh.loglik_point(log, topic1d).value - quadrature_loglik(log, topic1d)))
    ok = worst <= 1e-8
    check(7, "compensator exactness", ok, f"max |closed form - quadrature| {worst:.3g} <= 1e-8 on 20 logs")


def test_criterion_8_thinning_validity(bench3d):
    params = sh.ModelParams(
        mu=[1.2, 0.8], kernel=sh.ScalarExpKernel(alpha=np.zeros((2, 2)), beta=np.ones((2, 2)))
    )
    log = sh.simulate(params, sh.NoMarks(), 5200.0, np.random.default_rng(808))
    gaps = np.diff(np.concatenate([[0.0], log.times]))[:10_000]
    p = stats.kstest(gaps, "expon", args=(0, 0.5)).pvalue
    lam_bar = sh.stationary_mean_intensity(bench3d)
    T, trials = 3000.0, 200
    obs = np.array(
        [sh.simulate(bench3d, sh.NoMarks(), T, np.random.default_rng(9000 + k)).counts(3) / T for k in range(trials)]
    )
    se = obs.std(axis=0, ddof=1) / np.sqrt(trials)
    dev = np.abs(obs.mean(axis=0) - lam_bar)
    ok = bool(gaps.size >= 10_000 and p > 0.001 and np.all(dev < 3 * se))
    check(
        8,
        "thinning validity",
        ok,
        f"KS p = {p:.4f} > 0.001 on {gaps.size} interarrivals; "
        f"rate deviations {np.round(dev / se, 2).tolist()} sigma (< 3)",
    )


@njit(cache=True)
def _grid_scan(grid, powq, first, kappa):
    best_f = 1e300
    best_x = 0.0
    for i in range(grid.shape[0]):
        dx = grid[i] - first
        f = dx * dx + kappa * powq[i]
        if f < best_f:
            best_f = f
            best_x = grid[i]
    return best_x, best_f


def test_criterion_9_threshold_grid_equivalence():
    grid = np.linspace(0.0, 1.0, 1_000_001)
    rng = np.random.default_rng(909)
    worst_x, worst_f = 0.0, 0.0
    for q in (0.3, 0.5, 1.0):
        powq = grid**q
        for _ in range(1000):
            first = float(rng.uniform(0.0, 1.0))
            kappa = float(rng.uniform(1e-4, 0.5))
            x = sh.threshold_coordinate(first, kappa, q, 1.0)
            gx, gf = _grid_scan(grid, powq, first, kappa)
            f = (x - first) ** 2 + kappa * x**q
            worst_x = max(worst_x, abs(x - gx))
            worst_f = max(worst_f, abs(f - gf))
    ok = worst_x <= 1e-6 and worst_f <= 1e-10
    check(
        9,
        "step-2 grid equivalence",
        ok,
        f"max |arg diff| {worst_x:.2e} <= 1e-6, max |obj diff| {worst_f:.2e} <= 1e-10 "
        f"over 3000 pairs at q in (0.3, 0.5, 1.0)",
    )


def test_criterion_10_schedule_limits():
    hyper = sh.PoHyper(q=1.0, gamma=1.0, a=0.5)
    rng = np.random.default_rng(1010)
    horizons = [1e2, 1e3, 1e4, 1e5]
    a_vals, b_vals = [], []
    for T in horizons:
        reps_a, reps_b = [], []
        for _ in range(400):
            t_nz = 0.3 + rng.standard_normal() / math.sqrt(T)
            t_z = abs(rng.standard_normal()) / math.sqrt(T)
            reps_a.append(math.sqrt(T) * hyper.kappa(np.array([t_nz]), T)[0])
            reps_b.append(T ** ((2 - hyper.q) / 2) * hyper.kappa(np.array([t_z]), T)[0])
        a_vals.append(float(np.mean(reps_a)))
        b_vals.append(float(np.mean(reps_b)))
    ok = bool(
        np.all(np.diff(a_vals) < 0)
        and a_vals[-1] < 0.25 * a_vals[0]
        and np.all(np.diff(b_vals) > 0)
        and b_vals[-1] > 4 * b_vals[0]
    )
    check(
        10,
        "schedule limits",
        ok,
        f"sqrt(T) a_T decreasing {np.round(a_vals, 4).tolist()}; "
        f"T^((2-q)/2) b_T increasing {np.round(b_vals, 3).tolist()}",
    )


def test_criterion_11_elastic_net_contrast(runblocks):
    names = list(runblocks.coord_names)
    truth = runblocks.truth
    w_names = [n for n in names if n.startswith("alpha_")]
    zero_names = [n for n in w_names if truth[names.index(n)] == 0.0]
    po = rates(runblocks, "po", zero_names)
    en = rates(runblocks, "elastic_net", zero_names)
    ok = bool(po.mean() > en.mean() and po.mean() >= 0.80 and en.mean() <= 0.75)
    check(
        11,
        "elastic-net contrast",
        ok,
        f"P-O mean true-zero rate {po.mean():.3f} >= 0.80 strictly above "
        f"elastic net {en.mean():.3f} <= 0.75 (8 silent edges, 50 trials)",
    )


def test_criterion_12_parallel_determinism(bench3d, topic1d, topic_kernel, blocks4d, tmp_path):
    configs = {
        "b3": sh.ExperimentConfig(
            params=bench3d, mark_kernel=sh.NoMarks(), horizons=(300.0,), trials=6,
            hyper=sh.PoHyper(1.0, 1.0, 0.5), methods=("qmle", "po"), base_seed=121,
        ),
        "tp": sh.ExperimentConfig(
            params=topic1d, mark_kernel=topic_kernel, horizons=(120.0,), trials=4,
            hyper=sh.PoHyper(1.0, 2.0, 0.5), methods=("qmle", "po"), base_seed=122,
        ),
        "bl": sh.ExperimentConfig(
            params=blocks4d, mark_kernel=sh.NoMarks(), horizons=(300.0,), trials=4,
            hyper=sh.PoHyper(1.0, 1.0, 0.5), methods=("po", "elastic_net"),
            base_seed=123, fix_beta=True,
        ),
    }
    all_same, checked = True, 0
    for tag, config in configs.items():
        dirs = []
        for degree in (1, 3):
            out = tmp_path / f"{tag}_p{degree}"
            sh.export_report(sh.run_mc(config, parallel=degree), out, figures=True)
            dirs.append(out)
        names = sorted(p.name for p in dirs[0].iterdir())
        assert names == sorted(p.name for p in dirs[1].iterdir())
        match, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
        checked += len(match)
        if mismatch or errors:
            all_same = False
    check(
        12,
        "parallel determinism",
        all_same,
        f"{checked} exported files byte-identical across parallelism degrees 1 and 3 "
        f"(all three experiment models)",
    )
