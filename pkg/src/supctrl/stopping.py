"""Marginal value as an optimal stopping problem and the Gittins-style signal.

The marginal value of the optimal reflection policy solves a stopping problem
for the auxiliary diffusion

    dXhat = (mu + sigma' sigma)(Xhat) dt + sigma(Xhat) dW,

killed at the state-dependent rate rho = r - mu'.  Its increasing/decreasing
killed fundamental solutions are psi' and -phi', which underlies both the
two-sided-exit pricing used by the signal computation and the representing
function

    f_tilde(x) = A'(x) - A''(x) psi'(x)/psi''(x),

tied to the reflection-side representing function by
f'(x) = f_tilde(x) psi''(x) psi(x) / psi'(x)^2.

This module requires 0 unattainable for the base diffusion, so psihat0 = psi
throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .control import ControlProblem, ControlSolution
from .errors import AssumptionViolationError, DomainError, NumericError, UnsupportedModelError

__all__ = ["HatDiffusionSpec", "StoppingProblem", "StoppingSolution", "hat_spec_from"]


@dataclass(frozen=True)
class HatDiffusionSpec:
    """Coefficients of the auxiliary diffusion and its kill rate."""

    drift_hat: Callable[[float], float]
    volatility: Callable[[float], float]
    rho: Callable[[float], float]
    scale_density_hat: Callable[[float], float]
    speed_density_hat: Callable[[float], float]


def hat_spec_from(problem: ControlProblem) -> HatDiffusionSpec:
    spec = problem.spec
    if spec.drift_prime is None or spec.volatility_prime is None:
        raise UnsupportedModelError("hat diffusion needs analytic drift/volatility derivatives")
    fs = problem.fs
    return HatDiffusionSpec(
        drift_hat=lambda x: spec.drift(x) + spec.volatility_prime(x) * spec.volatility(x),
        volatility=spec.volatility,
        rho=lambda x: spec.rate - spec.drift_prime(x),
        scale_density_hat=lambda x: fs.scale_density(x) / spec.sigma2(x),
        speed_density_hat=lambda x: 2.0 / fs.scale_density(x),
    )


@dataclass
class StoppingSolution:
    """Marginal value, stopping representing function, and signal access."""

    problem: "StoppingProblem"
    y_star: float

    def H_prime(self, x: float) -> float:
        return self.problem.marginal_value(x)

    def f_tilde(self, x: float) -> float:
        return self.problem.f_tilde(x)

    def gamma_hat(self, x: float) -> float:
        return self.problem.gittins_signal(x, "increasing")


class StoppingProblem:
    """Stopping-side computations attached to a solved control problem."""

    def __init__(self, solution: ControlSolution):
        self.control = solution
        self.problem = solution.problem
        self.spec = self.problem.spec
        self.fs = self.problem.fs
        if self.fs.classification.lower_attainable():
            raise UnsupportedModelError("stopping representation requires 0 unattainable for the base diffusion")
        self.hat = hat_spec_from(self.problem)
        self.y_star = solution.y_star
        self._check_rho_positive()

    def _check_rho_positive(self):
        grid = np.geomspace(self.problem.scan_lo, self.problem.scan_hi, 100)
        rho = np.array([self.hat.rho(x) for x in grid])
        if np.any(rho <= 0):
            raise AssumptionViolationError("kill rate r - mu' must be positive (assumption on appreciation rate)")

    def solution(self) -> StoppingSolution:
        return StoppingSolution(problem=self, y_star=self.y_star)

    # -- marginal value ------------------------------------------------------- #
    def marginal_value(self, x: float) -> float:
        """H'_{y*}: A'(x) in the stopping region, scaled psi' below it."""
        self.spec.require_inside(x)
        if x >= self.y_star:
            return self.problem.A_p(x)
        return self.problem.A_p(self.y_star) * self.fs.psi_p(x) / self.fs.psi_p(self.y_star)

    def marginal_value_extremal_form(self, x: float) -> float:
        """Extremal form: sup_{y >= x} A'(y)/psi'(y) scaled by psi'(x).

        The ratio attains its unique global maximum at y* and is nonincreasing
        beyond it, so the supremum reproduces A'(y* v x)/psi'(y* v x) and the
        piecewise marginal value; both routes must agree.
        """
        obj = lambda y: -self.problem.A_p(y) / self.fs.psi_p(y)
        hi = self.problem.scan_hi
        res = minimize_scalar(obj, bounds=(x, hi), method="bounded", options={"xatol": 1e-11})
        best = max(-float(res.fun), -obj(x), -obj(hi))
        return best * self.fs.psi_p(x)

    # -- representing function ------------------------------------------------ #
    def f_tilde(self, x: float) -> float:
        self.spec.require_inside(x)
        ppp = self.fs.psi_pp(x)
        if ppp <= 0:
            raise AssumptionViolationError(f"psi not convex at x={x:g}")
        return self.problem.A_p(x) - self.problem.A_pp(x) * self.fs.psi_p(x) / ppp

    def f_tilde_quotient(self, x: float) -> float:
        """Quotient-of-integrals form; valid when psi''/Shat' vanishes at 0."""
        lo = max(self.fs.x_lo, 1e-12)
        num, _ = quad(
            lambda s: (self.fs.psi_p(math.exp(s)) * self.problem.GrA_p(math.exp(s))
                       * self.hat.speed_density_hat(math.exp(s)) * math.exp(s)),
            math.log(lo), math.log(x), epsabs=1e-13, epsrel=1e-11, limit=300,
        )
        den, _ = quad(
            lambda s: (self.hat.rho(math.exp(s)) * self.fs.psi_p(math.exp(s))
                       * self.hat.speed_density_hat(math.exp(s)) * math.exp(s)),
            math.log(lo), math.log(x), epsabs=1e-13, epsrel=1e-11, limit=300,
        )
        if den <= 0:
            raise NumericError("degenerate denominator in quotient form")
        return -num / den

    def expected_f_tilde_at_supremum(self, x: float) -> float:
        """Quadrature of the supremum law of the killed hat diffusion.

        P_x[sup Xhat before kill >= z] = psi'(x)/psi'(z), so the expected
        supremum of the cut-off nondecreasing f_tilde integrates f_tilde
        against the measure psi''(z)/psi'(z)^2 dz above x v y*.
        """
        lo = max(x, self.y_star)
        integrand = lambda z: self.f_tilde(z) * self.fs.psi_pp(z) / self.fs.psi_p(z) ** 2
        hi = self.fs.x_hi
        if math.isinf(hi):
            val, _ = quad(integrand, lo, np.inf, epsabs=1e-12, epsrel=1e-10, limit=300)
        else:
            val, _ = quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=300)
        return self.fs.psi_p(x) * val

    # -- linkage to the control-side representing function -------------------- #
    def linkage_residual(self, x: float) -> float:
        if x < self.y_star:
            raise DomainError("linkage identity is checked on the stopping region only")
        lhs = self.problem.representing_f_x(self.y_star, x)
        rhs = self.f_tilde(x) * self.fs.psi_pp(x) * self.fs.psi(x) / self.fs.psi_p(x) ** 2
        return lhs - rhs

    # -- boundary/convexity conditions for attainability of the value --------- #
    def stopping_value_bounds_check(self) -> dict:
        """Numeric verification of the divergence and convexity conditions."""
        lo_grid = np.geomspace(self.fs.x_lo if self.fs.x_lo > 0 else 1e-6,
                               10.0 * (self.fs.x_lo if self.fs.x_lo > 0 else 1e-6), 8)
        hi = self.fs.x_hi if not math.isinf(self.fs.x_hi) else 1e4
        hi_grid = np.geomspace(0.1 * hi, hi, 8)
        phi_p_low = np.array([self.fs.phi_p(x) for x in lo_grid])
        psi_p_high = np.array([self.fs.psi_p(x) for x in hi_grid])
        report = {
            "phi_p_diverges_at_0": bool(np.all(np.diff(phi_p_low) > 0) and phi_p_low[0] < 10.0 * phi_p_low[-1]
                                        and phi_p_low[0] < -1.0),
            "psi_p_diverges_at_b": bool(np.all(np.diff(psi_p_high) > 0) and psi_p_high[-1] > 10.0 * psi_p_high[0]),
        }
        mid = np.geomspace(self.problem.scan_lo, self.problem.scan_hi, 50)
        psi_pp = np.array([self.fs.psi_pp(x) for x in mid])
        phi_pp = np.array([self.fs.phi_pp(x) for x in mid])
        report["psi_convex"] = bool(np.all(psi_pp > 0))
        report["phi_convex"] = bool(np.all(phi_pp > 0))
        report["all_pass"] = all(report.values())
        return report

    # -- two-sided exit of the killed hat diffusion --------------------------- #
    def two_sided_exit_value(self, g, z: float, y: float, x: float) -> float:
        """E_x[e^{-int rho} g(Xhat_tau)] for the first exit tau from (z, y).

        Built from the killed fundamental solutions psi' (increasing) and
        -phi' (decreasing).
        """
        if not (0.0 < z < x < y < self.spec.b):
            raise DomainError(f"need 0 < z < x < y < b, got z={z:g}, x={x:g}, y={y:g}")
        psip, phip = self.fs.psi_p, self.fs.phi_p
        v1 = lambda s: (phip(y) / psip(y)) * psip(s) - phip(s)
        v2 = lambda s: psip(s) - (psip(z) / phip(z)) * phip(s)
        return g(z) * v1(x) / v1(z) + g(y) * v2(x) / v2(y)

    # -- Gittins-style signal -------------------------------------------------- #
    def gittins_signal(self, x: float, direction: str = "increasing",
                       n_lattice: int = 40, refine: bool = True) -> float:
        """gamma_hat (increasing flow) or gamma_check (decreasing flow) at x.

        Optimizes the stopped-payoff gap ratio over a log-spaced lattice of
        exit intervals (z, y) containing x, with one halving refinement pass
        around the incumbent optimum.
        """
        if direction not in ("increasing", "decreasing"):
            raise DomainError(f"unknown flow direction {direction!r}")
        alpha = self.problem.payoff.alpha
        rp = lambda t: self.problem.Rpi(t, 1)
        minimize = direction == "increasing"

        def ratio(z, y):
            num = alpha(x) - self.two_sided_exit_value(alpha, z, y, x)
            den = rp(x) - self.two_sided_exit_value(rp, z, y, x)
            if den <= 0:
                raise AssumptionViolationError(
                    f"nonpositive denominator on exit interval ({z:g}, {y:g}); flow monotonicity violated")
            return num / den

        def search(zs, ys):
            best, arg = (math.inf if minimize else -math.inf), None
            for z in zs:
                for y in ys:
                    if (y - z) < 1e-3 * x:  # minimum relative width
                        continue
                    v = ratio(z, y)
                    if (v < best) if minimize else (v > best):
                        best, arg = v, (z, y)
            return best, arg

        hi = min(self.spec.b, 50.0 * x)
        zs = np.geomspace(0.02 * x, x * (1.0 - 1e-6), n_lattice)
        ys = np.geomspace(x * (1.0 + 1e-6), hi, n_lattice)
        best, arg = search(zs, ys)
        if refine and arg is not None:
            z0, y0 = arg
            zs2 = np.geomspace(max(0.02 * x, z0 / 2.0), min(x * (1.0 - 1e-6), z0 * 2.0), n_lattice)
            ys2 = np.geomspace(max(x * (1.0 + 1e-6), y0 / 2.0), min(hi, y0 * 2.0), n_lattice)
            best2, _ = search(zs2, ys2)
            best = min(best, best2) if minimize else max(best, best2)
        return best

    def gittins_crossing(self, rel_cell: float = 0.005, span: float = 0.05,
                         direction: str = "increasing") -> dict:
        """Localize the crossing of the signal through 1 near y*.

        Scans a grid of cell width rel_cell * y* across (1 +- span) y* and
        returns the bracketing cell.
        """
        y = self.y_star
        xs = np.arange((1.0 - span) * y, (1.0 + span) * y, rel_cell * y)
        vals = np.array([self.gittins_signal(x, direction) - 1.0 for x in xs])
        sign_change = np.where(np.diff(np.sign(vals)) != 0)[0]
        if len(sign_change) != 1:
            raise NumericError(f"expected one sign change of the signal near y*, found {len(sign_change)}")
        i = int(sign_change[0])
        return {"cell": (float(xs[i]), float(xs[i + 1])), "cell_width": float(xs[i + 1] - xs[i]),
                "contains_y_star": bool(xs[i] <= y <= xs[i + 1])}

    # -- residual of the killed-solution ODE ---------------------------------- #
    def ode2_residual(self, x: float, which: str = "psi") -> float:
        """Residual of (1/2) s^2 v'' + (mu + s s') v' - rho v at v = psi' or -phi'."""
        if which == "psi":
            v, vp, vpp = self.fs.psi_p(x), self.fs.psi_pp(x), self.fs.psi_ppp(x)
        else:
            v, vp, vpp = -self.fs.phi_p(x), -self.fs.phi_pp(x), -self.fs.phi_ppp(x)
        return (0.5 * self.spec.sigma2(x) * vpp + self.hat.drift_hat(x) * vp
                - self.hat.rho(x) * v)
