"""Command-line interface: solve, figure1, verify, simulate.

Exit codes: 0 success, 2 assumption/config/model violation, 3 numeric failure
(or failed verification items).
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import montecarlo as mc
from .config import load_config
from .control import gbm_scalar_foc
from .errors import (AssumptionViolationError, ConfigError, NumericError,
                     SupctrlError, UnsupportedModelError)
from .resolvent import L_functional
from .stopping import StoppingProblem

EXIT_OK = 0
EXIT_ASSUMPTION = 2
EXIT_NUMERIC = 3


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _emit_report(pairs, out_dir, filename):
    lines = [f"{k} = {_fmt(v)}" for k, v in pairs]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, filename), "w", encoding="utf-8") as fh:
            fh.write(text)


def _perturb_kappa(problem, rel):
    """Debug hook: rescale the psi exponent without touching B (fault injection)."""
    fs = problem.fs
    if fs.kappa is None:
        raise ConfigError("kappa perturbation only applies to closed-form GBM mode")
    k = fs.kappa * (1.0 + rel)
    fs.psi = lambda x: x**k
    fs.psi_p = lambda x: k * x ** (k - 1.0)
    fs.psi_pp = lambda x: k * (k - 1.0) * x ** (k - 2.0)


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    problem = cfg.build_problem()
    sol = problem.solve_threshold()
    stop = StoppingProblem(sol)
    fit = problem.smooth_fit_check(sol.y_star)
    pairs = [
        ("y_star", sol.y_star),
        ("bracket.low", sol.bracket[0]),
        ("bracket.high", sol.bracket[1]),
        ("foc_residual", sol.foc_residual),
        ("smooth_fit.left", fit["left"]),
        ("smooth_fit.right", fit["right"]),
        ("smooth_fit.rel_gap", fit["rel_gap"]),
    ]
    grid = np.geomspace(max(0.2 * sol.y_star, problem.scan_lo), 4.0 * sol.y_star, 25)
    for x in grid:
        pairs.append((f"V[{x:.6g}]", sol.V(x)))
        pairs.append((f"H_prime[{x:.6g}]", stop.marginal_value(x)))
    _emit_report(pairs, args.out, "solve_report.txt")
    return EXIT_OK


def cmd_figure1(args) -> int:
    cfg = load_config(args.config)
    problem = cfg.build_problem()
    sol = problem.solve_threshold()
    y = sol.y_star
    grid = np.geomspace(0.2 * y, 4.0 * y, 399)
    grid = np.sort(np.append(grid, y))
    rows = [(x,
             problem.representing_f(y, x),
             problem.representing_f(0.75 * y, x),
             problem.representing_f(1.25 * y, x)) for x in grid]
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "figure1.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "f_optimal", "f_low", "f_high"])
        for row in rows:
            writer.writerow([f"{v:.17g}" for v in row])
    sys.stdout.write(f"wrote {path} ({len(rows)} rows)\n")
    return EXIT_OK


def _verify_items(cfg, args):
    problem = cfg.build_problem()
    if args.debug_kappa_perturb:
        _perturb_kappa(problem, args.debug_kappa_perturb)
    fs, spec, kernel = problem.fs, problem.spec, problem.kernel
    items = []

    grid = np.geomspace(problem.scan_lo, problem.scan_hi, 50)
    w = np.array([fs.wronskian_at(x) for x in grid])
    rel_spread = float(np.std(w) / abs(np.mean(w)))
    items.append(("wronskian_constancy", rel_spread < 1e-8, rel_spread))

    ode_res = max(
        max(abs(0.5 * spec.sigma2(x) * fs.psi_pp(x) + spec.drift(x) * fs.psi_p(x)
                - spec.rate * fs.psi(x)) / (1.0 + abs(fs.psi(x))) for x in grid),
        max(abs(0.5 * spec.sigma2(x) * fs.phi_pp(x) + spec.drift(x) * fs.phi_p(x)
                - spec.rate * fs.phi(x)) / (1.0 + abs(fs.phi(x))) for x in grid),
    )
    items.append(("ode_residual", ode_res < 1e-8, ode_res))

    flows = [lambda x: 1.0, lambda x: x**0.5, lambda x: math.exp(-((x - 1.0) ** 2))]
    inv_res = 0.0
    for f in flows:
        for x in np.geomspace(0.5, 5.0, 6):
            rf = lambda t, _f=f: kernel.resolvent(_f, t)
            h = 1e-4 * max(1.0, x)
            gp = (rf(x + h) - rf(x - h)) / (2.0 * h)
            gpp = (rf(x + h) - 2.0 * rf(x) + rf(x - h)) / (h * h)
            val = 0.5 * spec.sigma2(x) * gpp + spec.drift(x) * gp - spec.rate * rf(x)
            inv_res = max(inv_res, abs(val + f(x)) / (1.0 + abs(f(x))))
    items.append(("resolvent_inverse", inv_res < 1e-4, inv_res))

    sol = problem.solve_threshold()
    y = sol.y_star
    sup_res = max(problem.supremum_identity_check(yy, xx)["abs_diff"]
                  for yy in (0.8 * y, y, 1.3 * y) for xx in (0.6 * y, y, 2.0 * y))
    items.append(("supremum_identity", sup_res < 1e-7, sup_res))

    sign_opt = problem.sign_property_check(y)
    sign_low = problem.sign_property_check(0.75 * y)
    sign_high = problem.sign_property_check(1.25 * y)
    items.append(("sign_corollary",
                  sign_opt["region_nonneg"] and sign_low["min_f"] < 0 and sign_high["min_f"] < 0,
                  sign_opt["min_f"]))

    fit = problem.smooth_fit_check(y)
    items.append(("smooth_fit", fit["rel_gap"] < 1e-4, fit["rel_gap"]))

    stop = StoppingProblem(sol)
    link = max(abs(stop.linkage_residual(x)) / (1.0 + abs(problem.representing_f_x(y, x)))
               for x in np.geomspace(y, min(10.0, problem.scan_hi), 30))
    items.append(("linkage_identity", link < 1e-6, link))

    prop_y = problem.prop_y_threshold()
    items.append(("prop_y_agreement", abs(prop_y - y) < 1e-6 * y, abs(prop_y - y)))

    if not args.skip_mc:
        sim = cfg.build_sim_config(paths=args.paths or 20_000, seed=args.seed)
        samples = mc.simulate_supremum_at_exp_time(spec, sim, 1.0)
        target = 1.5 * 1.0
        est = mc.prob_sup_exceeds(samples, target, sim.antithetic)
        analytic = problem.psihat0(1.0) / problem.psihat0(target)
        items.append(("mc_supremum_law", est.agrees_with(analytic, n_sigma=4.0), abs(est.mean - analytic)))

        est_h = mc.simulate_reflected_payoff(problem, sim, y, 1.0)
        analytic_h = problem.reflection_value_H(y, 1.0)
        items.append(("mc_reflected_value", est_h.agrees_with(analytic_h, n_sigma=4.0, rel_floor=0.02),
                      abs(est_h.mean - analytic_h)))

        est_s, bias = mc.simulate_hat_stopping(stop, sim, y, 1.0)
        analytic_s = stop.marginal_value(1.0)
        items.append(("mc_hat_stopping", est_s.agrees_with(analytic_s, n_sigma=4.0, rel_floor=0.02),
                      abs(est_s.mean - analytic_s)))
    return items


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    items = _verify_items(cfg, args)
    all_ok = True
    for name, ok, residual in items:
        sys.stdout.write(f"{name}: {'PASS' if ok else 'FAIL'} residual={residual:.3e}\n")
        all_ok = all_ok and ok
    return EXIT_OK if all_ok else EXIT_NUMERIC


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    problem = cfg.build_problem()
    sol = problem.solve_threshold()
    stop = StoppingProblem(sol)
    sim = cfg.build_sim_config(paths=args.paths, seed=args.seed)
    y, x0 = sol.y_star, 1.0

    samples = mc.simulate_supremum_at_exp_time(problem.spec, sim, x0)
    f_est = mc.expected_f_at_supremum_mc(
        samples, lambda m: np.array([problem.representing_f(y, v) for v in np.atleast_1d(m)]),
        y, sim.antithetic)
    refl = mc.simulate_reflected_payoff(problem, sim, y, x0)
    hat, bias = mc.simulate_hat_stopping(stop, sim, y, x0)
    pairs = [
        ("y_star", y),
        ("analytic.H", problem.reflection_value_H(y, x0)),
        ("mc.f_at_supremum.mean", f_est.mean),
        ("mc.f_at_supremum.std_error", f_est.std_error),
        ("mc.reflected.mean", refl.mean),
        ("mc.reflected.std_error", refl.std_error),
        ("analytic.H_prime", stop.marginal_value(x0)),
        ("mc.hat_stopping.mean", hat.mean),
        ("mc.hat_stopping.std_error", hat.std_error),
        ("mc.hat_stopping.bias_bound", bias),
    ]
    _emit_report(pairs, args.out, "simulate_report.txt")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="supctrl",
                                     description="Singular-control reflection values and expected-supremum representations")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("solve", cmd_solve), ("figure1", cmd_figure1),
                     ("verify", cmd_verify), ("simulate", cmd_simulate)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a section.key = value config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--paths", type=int, default=None)
        p.add_argument("--skip-mc", action="store_true", dest="skip_mc")
        p.add_argument("--debug-kappa-perturb", type=float, default=0.0,
                       help=argparse.SUPPRESS)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (AssumptionViolationError, UnsupportedModelError, ConfigError) as exc:
        sys.stderr.write(f"assumption violation: {exc}\n")
        return EXIT_ASSUMPTION
    except (NumericError, SupctrlError) as exc:
        sys.stderr.write(f"numeric failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
