"""Acceptance gate for the canonical geometric Brownian motion instance.

Each test prints one pass/fail line.  Run with ``pytest -s tests/test_acceptance.py``
to see the lines for passing criteria as well.
"""

import math
import time

import numpy as np
import pytest
from scipy.optimize import brentq

from supctrl import montecarlo as mc
from supctrl.control import gbm_power_multiplier, gbm_scalar_foc
from supctrl.montecarlo import SimConfig
from supctrl.stopping import StoppingProblem

X0 = 1.0
FULL_SIM = dict(n_paths=100_000, dt=1e-3, seed=7)


def _report(label: str, ok: bool, detail: str = ""):
    suffix = f" ({detail})" if detail else ""
    print(f"[{label}] {'PASS' if ok else 'FAIL'}{suffix}")
    assert ok, f"{label} failed{suffix}"


@pytest.fixture(scope="module")
def generic_stopping(generic_solution):
    return StoppingProblem(generic_solution)


@pytest.fixture(scope="module")
def sup_samples(problem):
    return mc.simulate_supremum_at_exp_time(problem.spec, SimConfig(**FULL_SIM), X0)


def test_criterion_01_constants(problem):
    fs = problem.fs
    # independent evaluation: the quadratic (1/2)s^2 q^2 + (m - s^2/2) q - r
    roots = np.sort(np.roots([0.5 * 0.1**2, 0.01 - 0.5 * 0.1**2, -0.05]))
    ok = (abs(fs.theta - roots[0]) < 1e-12 * abs(roots[0])
          and abs(fs.kappa - roots[1]) < 1e-12 * abs(roots[1]))
    M = gbm_power_multiplier(problem.spec, 0.5)
    ok = ok and abs(M - 1.0 / 0.04625) < 1e-12 * (1.0 / 0.04625)
    _report("criterion-01 closed-form constants", ok,
            f"kappa={fs.kappa:.15g} theta={fs.theta:.15g} M={M:.15g}")


def test_criterion_02_threshold_agreement(problem, solution):
    t0 = time.perf_counter()
    y = solution.y_star
    pay, fs = problem.payoff, problem.fs
    scalar = gbm_scalar_foc(problem.spec, pay, fs.kappa)
    y_scalar = brentq(scalar, 0.5, 5.0, xtol=1e-13)
    y_ratio = problem.threshold_by_ratio_max()
    y_prop = problem.prop_y_threshold()
    M, eta = gbm_power_multiplier(problem.spec, 0.5), 0.5
    K1, K2 = pay.params["K1"], pay.params["K2"]
    core = M * eta * (fs.kappa - eta) / (fs.kappa - 1.0)
    lo, hi = (core / K1) ** 2, (core / K2) ** 2
    elapsed = time.perf_counter() - t0
    spread = max(abs(v - y) for v in (y_scalar, y_ratio, y_prop))
    ok = spread < 1e-6 and lo < y < hi and elapsed < 5.0
    _report("criterion-02 threshold agreement", ok,
            f"y*={y:.12g} spread={spread:.2e} bracket=({lo:.6g},{hi:.6g}) t={elapsed:.2f}s")


def test_criterion_03_supremum_identity(problem, solution):
    t0 = time.perf_counter()
    y0 = solution.y_star
    worst = 0.0
    for y in np.geomspace(0.5 * y0, 2.0 * y0, 20):
        for x in np.geomspace(0.3 * y0, 3.0 * y0, 20):
            chk = problem.supremum_identity_check(y, x)
            worst = max(worst, chk["abs_diff"] / (1.0 + abs(chk["reflection_value"])))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-7 and elapsed < 30.0
    _report("criterion-03 supremum identity", ok,
            f"max_rel_diff={worst:.2e} t={elapsed:.1f}s")


def test_criterion_04_monte_carlo_cross_check(problem, solution, sup_samples):
    t0 = time.perf_counter()
    y = solution.y_star
    H = problem.reflection_value_H(y, X0)
    f = lambda m: np.array([problem.representing_f(y, v) for v in np.atleast_1d(m)])
    est_f = mc.expected_f_at_supremum_mc(sup_samples, f, y)
    est_r = mc.simulate_reflected_payoff(problem, SimConfig(**FULL_SIM), y, X0)
    elapsed = time.perf_counter() - t0
    comb = math.hypot(est_f.std_error, est_r.std_error)
    pair_ok = abs(est_f.mean - est_r.mean) <= max(3.0 * comb, 0.015 * abs(H))
    ok = (est_f.agrees_with(H, n_sigma=3.0, rel_floor=0.015)
          and est_r.agrees_with(H, n_sigma=3.0, rel_floor=0.015)
          and pair_ok and elapsed < 300.0)
    _report("criterion-04 monte-carlo cross-check", ok,
            f"H={H:.6g} f(M)={est_f.mean:.6g}+-{est_f.std_error:.2g} "
            f"reflected={est_r.mean:.6g}+-{est_r.std_error:.2g} t={elapsed:.0f}s")


def test_criterion_05_sign_corollary(problem, solution):
    y = solution.y_star
    grid = np.sort(np.append(np.geomspace(0.2 * y, 4.0 * y, 399), y))
    opt = problem.sign_property_check(y, grid=grid)
    low = problem.sign_property_check(0.75 * y, grid=grid)
    high = problem.sign_property_check(1.25 * y, grid=grid)
    ok = (-1e-8 <= opt["min_f"] <= 1e-8
          and abs(opt["argmin"] - y) < 1e-12
          and low["min_f"] < -1e-3 and high["min_f"] < -1e-3)
    _report("criterion-05 sign corollary", ok,
            f"min_f(y*)={opt['min_f']:.2e} min_f(low)={low['min_f']:.2e} "
            f"min_f(high)={high['min_f']:.2e}")


def test_criterion_06_smooth_fit(problem, solution, stopping):
    y = solution.y_star
    fit = problem.smooth_fit_check(y)
    fp = problem.representing_f_x(y, y)
    ft = stopping.f_tilde(y)
    ok = fit["rel_gap"] < 1e-4 and abs(fp) < 1e-6 and abs(ft) < 1e-6
    _report("criterion-06 smooth fit", ok,
            f"V''gap={fit['rel_gap']:.2e} f'(y*)={fp:.2e} f~(y*)={ft:.2e}")


def test_criterion_07_linkage_identity(problem, solution, stopping, generic_stopping):
    def max_res(stop, prob):
        xs = np.linspace(stop.y_star, 10.0, 100)
        return max(abs(stop.linkage_residual(x))
                   / (1.0 + abs(prob.representing_f_x(stop.y_star, x))) for x in xs)
    closed = max_res(stopping, problem)
    generic = max_res(generic_stopping, problem)
    ok = closed < 1e-6 and generic < 1e-5
    _report("criterion-07 linkage identity", ok,
            f"closed={closed:.2e} generic={generic:.2e}")


def test_criterion_08_hat_stopping_mc(stopping):
    est, bias = mc.simulate_hat_stopping(stopping, SimConfig(**FULL_SIM),
                                         stopping.y_star, X0)
    analytic = stopping.marginal_value(X0)
    ok = abs(est.mean - analytic) <= 3.0 * est.std_error + bias
    _report("criterion-08 hat-stopping monte carlo", ok,
            f"mc={est.mean:.6g}+-{est.std_error:.2g} analytic={analytic:.6g}")


def test_criterion_09_gittins_crossing(stopping, solution):
    cross = stopping.gittins_crossing(rel_cell=0.005)
    ok = cross["contains_y_star"] and cross["cell_width"] <= 0.005 * solution.y_star + 1e-12
    _report("criterion-09 gittins crossing", ok,
            f"cell=({cross['cell'][0]:.6g},{cross['cell'][1]:.6g}) "
            f"width={cross['cell_width']:.2e}")


def test_criterion_10_generic_vs_closed_form(solution, generic_solution):
    y, yg = solution.y_star, generic_solution.y_star
    rel_y = abs(yg - y) / y
    grid = np.geomspace(0.3, 8.0, 30)
    rel_v = max(abs(generic_solution.V(x) - solution.V(x)) / abs(solution.V(x))
                for x in grid)
    ok = rel_y < 1e-5 and rel_v < 1e-5
    _report("criterion-10 generic-vs-closed-form", ok,
            f"rel_y={rel_y:.2e} rel_V={rel_v:.2e}")
