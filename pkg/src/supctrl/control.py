"""Reflection values, the representing function, and the optimal threshold.

The option value of instantaneous depletion is A = Lambda - R_r pi.  The
value of reflecting at a fixed barrier y splits into F_y = R_r pi + H_y with

    H_y(x) = A(x) - A(y) + A'(y) psihat0(y)/psihat0'(y)   (x >= y)
           = A'(y) psihat0(x)/psihat0'(y)                 (x < y),

and H_y(x) = E_x[f(M_T) 1_{[y,b)}(M_T)] for the representing function

    f(x; y) = g(x) - g(y),   g(x) = A(x) - A'(x) psihat0(x)/psihat0'(x),

where M_T is the running supremum at an independent Exp(r) time.  The
optimal barrier y* maximizes A'/psihat0' and is located by bracketed root
finding on the first-order condition

    r int_0^y psihat0 (G_r A) m' dt - (G_r A)(y) psihat0'(y)/S'(y) = 0.

Generator applications to A avoid resolvent quadrature through the identity
G_r A = G_r Lambda + pi, since G_r R_r pi = -pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from .diffusion import DiffusionSpec, FundamentalSolutions, killed_psi
from .errors import AssumptionViolationError, NumericError
from .resolvent import ResolventKernel

__all__ = [
    "PayoffSpec",
    "ControlProblem",
    "ControlSolution",
    "power_exp_payoff",
    "gbm_power_multiplier",
    "gbm_scalar_foc",
]


@dataclass(frozen=True)
class PayoffSpec:
    """Flow payoff pi and marginal control return alpha with derivatives.

    ``Lambda`` is the cumulative marginal return int_0^x alpha.  ``pi_power``
    marks the parametric flow pi(x) = x^eta, for which GBM admits the closed
    resolvent M x^eta.  ``params`` carries the parametric constants when the
    payoff comes from the exponential-blend family.
    """

    pi: Callable[[float], float]
    pi_p: Callable[[float], float]
    alpha: Callable[[float], float]
    alpha_p: Callable[[float], float]
    alpha_pp: Callable[[float], float]
    Lambda: Callable[[float], float]
    x_alpha: float = 0.0
    pi_power: Optional[float] = None
    params: dict = field(default_factory=dict)


def power_exp_payoff(eta: float, K1: float, K2: float, nu: float) -> PayoffSpec:
    """pi(x) = x^eta, alpha(x) = K1 e^(-nu x) + K2 (1 - e^(-nu x))."""
    dK = K1 - K2
    return PayoffSpec(
        pi=lambda x: x**eta,
        pi_p=lambda x: eta * x ** (eta - 1.0),
        alpha=lambda x: K2 + dK * np.exp(-nu * x),
        alpha_p=lambda x: -nu * dK * np.exp(-nu * x),
        alpha_pp=lambda x: nu * nu * dK * np.exp(-nu * x),
        Lambda=lambda x: K2 * x + dK * (1.0 - np.exp(-nu * x)) / nu,
        x_alpha=0.0 if K1 >= K2 else math.inf,
        pi_power=eta,
        params={"eta": eta, "K1": K1, "K2": K2, "nu": nu},
    )


def gbm_power_multiplier(spec: DiffusionSpec, eta: float) -> float:
    """M with (R_r x^eta)(x) = M x^eta under GBM."""
    denom = spec.rate - spec.mu_tilde * eta - 0.5 * spec.sigma_tilde**2 * eta * (eta - 1.0)
    if denom <= 0:
        raise AssumptionViolationError(f"power flow x^{eta} not r-integrable under GBM (denominator {denom:g})")
    return 1.0 / denom


def gbm_scalar_foc(spec: DiffusionSpec, payoff: PayoffSpec, kappa: float) -> Callable[[float], float]:
    """Scalar first-order condition for the GBM / exponential-blend instance.

    Derived by setting d/dy [A'(y)/psi'(y)] = 0, i.e. y A''(y) = (kappa-1) A'(y):

        M eta (kappa - eta) y^(eta-1)
            - (K1 - K2) e^(-nu y) (kappa - 1 + nu y) - (kappa - 1) K2 = 0.
    """
    p = payoff.params
    eta, K1, K2, nu = p["eta"], p["K1"], p["K2"], p["nu"]
    M = gbm_power_multiplier(spec, eta)

    def foc(y):
        return (M * eta * (kappa - eta) * y ** (eta - 1.0)
                - (K1 - K2) * math.exp(-nu * y) * (kappa - 1.0 + nu * y)
                - (kappa - 1.0) * K2)
    return foc


@dataclass
class ControlSolution:
    """Solved reflection problem: threshold, localization, diagnostics."""

    problem: "ControlProblem"
    y_star: float
    x_hat: float
    x_zero: float
    bracket: tuple
    foc_residual: float

    def H(self, x: float, y: Optional[float] = None) -> float:
        return self.problem.reflection_value_H(self.y_star if y is None else y, x)

    def F(self, x: float, y: Optional[float] = None) -> float:
        return self.problem.Rpi(x) + self.H(x, y)

    def V(self, x: float) -> float:
        return self.F(x)

    def f(self, x: float, y: Optional[float] = None) -> float:
        return self.problem.representing_f(self.y_star if y is None else y, x)

    def f_x(self, x: float, y: Optional[float] = None) -> float:
        return self.problem.representing_f_x(self.y_star if y is None else y, x)


class ControlProblem:
    """Binds a diffusion, its fundamental solutions, a kernel, and a payoff."""

    def __init__(self, spec: DiffusionSpec, fs: FundamentalSolutions,
                 kernel: ResolventKernel, payoff: PayoffSpec,
                 scan_lo: Optional[float] = None, scan_hi: Optional[float] = None,
                 grid_n: int = 2000):
        self.spec = spec
        self.fs = fs
        self.kernel = kernel
        self.payoff = payoff
        self.scan_lo = scan_lo if scan_lo is not None else max(fs.x_lo, 1e-2)
        default_hi = 50.0 if math.isinf(spec.b) else 0.99 * spec.b
        self.scan_hi = scan_hi if scan_hi is not None else min(default_hi, fs.x_hi if not math.isinf(fs.x_hi) else default_hi)
        self.grid_n = grid_n
        self._gbm_M = None
        if spec.kind == "gbm" and payoff.pi_power is not None:
            self._gbm_M = gbm_power_multiplier(spec, payoff.pi_power)

    # -- psihat0 shorthands -------------------------------------------------- #
    def psihat0(self, x: float, deriv: int = 0) -> float:
        return killed_psi(self.fs, 0.0, x, deriv)

    # -- resolvent of the flow ----------------------------------------------- #
    def Rpi(self, x: float, deriv: int = 0) -> float:
        if self._gbm_M is not None:
            eta, M = self.payoff.pi_power, self._gbm_M
            if deriv == 0:
                return M * x**eta
            if deriv == 1:
                return M * eta * x ** (eta - 1.0)
            return M * eta * (eta - 1.0) * x ** (eta - 2.0)
        if deriv < 2:
            return self.kernel.resolvent(self.payoff.pi, x, deriv)
        # second derivative from the ODE the resolvent satisfies
        spec = self.spec
        return 2.0 * (spec.rate * self.Rpi(x) - spec.drift(x) * self.Rpi(x, 1)
                      - self.payoff.pi(x)) / spec.sigma2(x)

    # -- option value A and its derivatives ---------------------------------- #
    def A(self, x: float) -> float:
        return self.payoff.Lambda(x) - self.Rpi(x)

    def A_p(self, x: float) -> float:
        return self.payoff.alpha(x) - self.Rpi(x, 1)

    def A_pp(self, x: float) -> float:
        return self.payoff.alpha_p(x) - self.Rpi(x, 2)

    def option_value_A(self, x: float) -> float:
        self.spec.require_inside(x)
        return self.A(x)

    def GrA(self, x: float) -> float:
        # G_r A = G_r Lambda + pi  (exact; avoids resolvent quadrature)
        p, spec = self.payoff, self.spec
        return (0.5 * spec.sigma2(x) * p.alpha_p(x) + spec.drift(x) * p.alpha(x)
                - spec.rate * p.Lambda(x) + p.pi(x))

    def GrA_p(self, x: float) -> float:
        p, spec = self.payoff, self.spec
        return (0.5 * spec.sigma2_prime(x) * p.alpha_p(x) + 0.5 * spec.sigma2(x) * p.alpha_pp(x)
                + spec.drift_prime(x) * p.alpha(x) + spec.drift(x) * p.alpha_p(x)
                - spec.rate * p.alpha(x) + p.pi_p(x))

    # -- reflection value and representing function -------------------------- #
    def reflection_value_H(self, y: float, x: float) -> float:
        self.spec.require_inside(y)
        self.spec.require_inside(x)
        lever = self.A_p(y) / self.psihat0(y, 1)
        if x >= y:
            return self.A(x) - self.A(y) + lever * self.psihat0(y)
        return lever * self.psihat0(x)

    def reflection_value_H_p(self, y: float, x: float) -> float:
        if x >= y:
            return self.A_p(x)
        return self.A_p(y) * self.psihat0(x, 1) / self.psihat0(y, 1)

    def reflection_value_H_pp(self, y: float, x: float) -> float:
        if x >= y:
            return self.A_pp(x)
        return self.A_p(y) * self.psihat0(x, 2) / self.psihat0(y, 1)

    def _g(self, x: float) -> float:
        return self.A(x) - self.A_p(x) * self.psihat0(x) / self.psihat0(x, 1)

    def representing_f(self, y: float, x: float) -> float:
        self.spec.require_inside(y)
        self.spec.require_inside(x)
        return self._g(x) - self._g(y)

    def representing_f_x(self, y: float, x: float) -> float:
        """d/dx f(x; y) = -(d/dx [A'/psihat0']) psihat0  (y-independent)."""
        p1, p2 = self.psihat0(x, 1), self.psihat0(x, 2)
        return -((self.A_pp(x) * p1 - self.A_p(x) * p2) / p1**2) * self.psihat0(x)

    def expected_f_at_supremum(self, y: float, x: float) -> float:
        """E_x[f(M_T) 1_{[y,b)}(M_T)] by quadrature of the supremum law."""
        lo = max(x, y)
        gy = self._g(y)

        def integrand(z):
            return (self._g(z) - gy) * self.psihat0(z, 1) / self.psihat0(z) ** 2

        hi = self.fs.x_hi
        if math.isinf(hi):
            val, _ = quad(integrand, lo, np.inf, epsabs=1e-12, epsrel=1e-10, limit=300)
        else:
            val, _ = quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=300)
        return self.psihat0(x) * val

    def supremum_identity_check(self, y: float, x: float) -> dict:
        lhs = self.reflection_value_H(y, x)
        rhs = self.expected_f_at_supremum(y, x)
        return {"reflection_value": lhs, "expected_supremum": rhs, "abs_diff": abs(lhs - rhs)}

    # -- assumption verification --------------------------------------------- #
    def verify_payoff_assumptions(self) -> None:
        p = self.payoff
        grid = np.geomspace(self.scan_lo, self.scan_hi, 200)
        a = np.array([p.alpha(x) for x in grid])
        if np.any(a <= 0):
            raise AssumptionViolationError("alpha must be positive on the state interval")
        if not (0.0 <= p.x_alpha < self.spec.b):
            raise AssumptionViolationError("alpha must attain its global maximum at an interior or zero state")
        above = grid >= max(p.x_alpha, grid[0])
        da = np.diff(a[above])
        if np.any(da > 1e-10 * (1.0 + np.abs(a[above][1:]))):
            raise AssumptionViolationError("alpha must be non-increasing beyond its maximum")
        self.kernel.check_integrable(p.pi, probes=(0.5 * self.scan_hi, self.scan_hi))
        # Lambda(x)/psihat0(x) -> 0 toward b, checked over the last decade
        xs = np.geomspace(0.1 * self.scan_hi, self.scan_hi, 8)
        ratios = np.array([p.Lambda(x) / self.psihat0(x) for x in xs])
        if not (np.all(np.diff(ratios) < 0) and ratios[-1] < 0.5 * ratios[0]):
            raise AssumptionViolationError("Lambda/psihat0 does not vanish toward the upper boundary")

    def verify_threshold_conditions(self) -> tuple:
        """Quasi-concavity of G_r A with interior argmax plus boundary signs.

        Returns (x_hat, x_zero).
        """
        grid = np.geomspace(self.scan_lo, self.scan_hi, self.grid_n)
        vals = np.array([self.GrA(x) for x in grid])
        imax = int(np.argmax(vals))
        if imax == 0 or imax == len(grid) - 1:
            raise AssumptionViolationError("argmax of G_r A is not interior (condition (i))")
        res = minimize_scalar(lambda x: -self.GrA(x),
                              bounds=(grid[imax - 1], grid[imax + 1]), method="bounded",
                              options={"xatol": 1e-12})
        x_hat = float(res.x)
        tol = 1e-9 * (1.0 + np.abs(vals))
        if np.any(np.diff(vals[: imax + 1]) < -tol[1: imax + 1]):
            raise AssumptionViolationError("G_r A not nondecreasing below its argmax (condition (i))")
        if np.any(np.diff(vals[imax:]) > tol[imax + 1:]):
            raise AssumptionViolationError("G_r A not non-increasing above its argmax (condition (i))")
        lower_lim = self.GrA(self.scan_lo)
        attainable = self.fs.classification.lower_attainable()
        if attainable and lower_lim <= 0:
            raise AssumptionViolationError("G_r A must be positive toward an attainable lower boundary (condition (ii))")
        if not attainable and lower_lim < -1e-9 * (1.0 + abs(lower_lim)):
            raise AssumptionViolationError("G_r A must be nonnegative toward the lower boundary (condition (ii))")
        if vals[-1] >= -1e-6:
            raise AssumptionViolationError("G_r A must stay below -eps toward the upper boundary (condition (ii))")
        last_decade = vals[grid >= 0.1 * self.scan_hi]
        if np.any(np.diff(last_decade) > 0):
            raise AssumptionViolationError("G_r A not monotone decreasing over the last grid decade (condition (ii))")
        if vals[imax] <= 0:
            raise AssumptionViolationError("G_r A has no interior zero above its argmax")
        x_zero = brentq(self.GrA, x_hat, self.scan_hi, xtol=1e-12)
        return x_hat, float(x_zero)

    # -- threshold solvers ---------------------------------------------------- #
    def foc(self, y: float) -> float:
        """Generic first-order condition as a function of the candidate barrier."""
        lo = max(self.fs.x_lo, 1e-12)
        integrand = lambda s: (self.psihat0(math.exp(s)) * self.GrA(math.exp(s))
                               * self.fs.speed_density(math.exp(s)) * math.exp(s))
        val, _ = quad(integrand, math.log(lo) if lo > 0 else -30.0, math.log(y),
                      epsabs=1e-12, epsrel=1e-10, limit=300)
        return self.spec.rate * val - self.GrA(y) * self.psihat0(y, 1) / self.fs.scale_density(y)

    def solve_threshold(self) -> ControlSolution:
        self.verify_payoff_assumptions()
        x_hat, x_zero = self.verify_threshold_conditions()
        a, b = x_hat * (1.0 + 1e-10), x_zero * (1.0 - 1e-10)
        fa, fb = self.foc(a), self.foc(b)
        if fa * fb > 0:
            raise NumericError(f"no FOC sign change on bracket ({a:g}, {b:g}): f(a)={fa:g}, f(b)={fb:g}")
        y_star = brentq(self.foc, a, b, xtol=1e-12, rtol=8.9e-16)
        return ControlSolution(
            problem=self,
            y_star=float(y_star),
            x_hat=x_hat,
            x_zero=x_zero,
            bracket=(x_hat, x_zero),
            foc_residual=abs(self.foc(y_star)),
        )

    def threshold_by_ratio_max(self) -> float:
        """Independent route: directly maximize A'/psihat0' on the bracket."""
        x_hat, x_zero = self.verify_threshold_conditions()
        obj = lambda x: -self.A_p(x) / self.psihat0(x, 1)
        res = minimize_scalar(obj, bounds=(x_hat, x_zero), method="bounded",
                              options={"xatol": 1e-11})
        if not res.success:
            raise NumericError("ratio maximization failed")
        return float(res.x)

    def prop_y_threshold(self) -> float:
        """Smallest state where A' - A'' psihat0'/psihat0'' turns nonnegative.

        Requires psihat0 convex on the scan grid.
        """
        grid = np.geomspace(self.scan_lo, self.scan_hi, self.grid_n)
        ppp = np.array([self.psihat0(x, 2) for x in grid])
        if np.any(ppp <= 0):
            raise AssumptionViolationError("psihat0 is not convex on the scan grid")

        def f_tilde(x):
            return self.A_p(x) - self.A_pp(x) * self.psihat0(x, 1) / self.psihat0(x, 2)

        vals = np.array([f_tilde(x) for x in grid])
        neg = np.where(vals < 0)[0]
        if len(neg) == 0:
            return float(grid[0])
        i = neg[-1]
        if i + 1 >= len(grid):
            raise AssumptionViolationError("A' - A'' psihat0'/psihat0'' never turns nonnegative")
        return float(brentq(f_tilde, grid[i], grid[i + 1], xtol=1e-12))

    # -- diagnostics ----------------------------------------------------------- #
    def sign_property_check(self, y: float, grid: Optional[np.ndarray] = None,
                            tol: float = 1e-8) -> dict:
        if grid is None:
            grid = np.geomspace(self.scan_lo, self.scan_hi, self.grid_n)
        vals = np.array([self.representing_f(y, x) for x in grid])
        min_f = float(np.min(vals))
        return {"min_f": min_f, "argmin": float(grid[int(np.argmin(vals))]),
                "region_nonneg": bool(min_f >= -tol)}

    def rep2_residual(self, y_star: float, x: float) -> float:
        """Consistency of the integral representation of the representing function."""
        z = max(x, y_star)
        lo = max(self.fs.x_lo, 1e-12)
        integrand = lambda s: (self.psihat0(math.exp(s)) * self.GrA(math.exp(s))
                               * self.fs.speed_density(math.exp(s)) * math.exp(s))
        val, _ = quad(integrand, math.log(lo), math.log(z),
                      epsabs=1e-12, epsrel=1e-10, limit=300)
        g_int = -self.fs.scale_density(z) / self.psihat0(z, 1) * val
        f_hat = self.GrA(y_star) / self.spec.rate + g_int
        return abs(f_hat - self.representing_f(y_star, z))

    def smooth_fit_check(self, y_star: float, h: float = 1e-3) -> dict:
        """Richardson-extrapolated one-sided second derivatives of V at y*."""
        V = lambda x: self.Rpi(x) + self.reflection_value_H(y_star, x)

        def second(a, d):
            return (V(a + d) - 2.0 * V(a) + V(a - d)) / (d * d)

        def one_sided(sign):
            outs = []
            for hh in (h, 0.5 * h):
                a = y_star + sign * 3.0 * hh
                outs.append(second(a, hh * 0.9))
            return 2.0 * outs[1] - outs[0]  # Richardson in the offset

        left, right = one_sided(-1.0), one_sided(+1.0)
        rel_gap = abs(left - right) / max(abs(left), abs(right), 1e-300)
        return {"left": left, "right": right, "rel_gap": rel_gap}
