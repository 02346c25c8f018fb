"""One-dimensional regular diffusions and their fundamental solutions.

A diffusion dX = mu(X) dt + sigma(X) dW on an interval (0, b) with constant
discount rate r is characterized by its scale density

    S'(x) = exp(-int_a^x 2 mu(t)/sigma^2(t) dt)

and speed density m'(x) = 2/(sigma^2(x) S'(x)).  The increasing/decreasing
positive solutions psi/phi of (1/2) sigma^2 u'' + mu u' - r u = 0 are
available in closed form for geometric Brownian motion and by stabilized
two-sided ODE integration otherwise.  All downstream formulas use ratios in
which the (arbitrary) normalizations of S' and of psi, phi cancel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import DomainError, NumericError, UnsupportedModelError

__all__ = [
    "DiffusionSpec",
    "BoundaryClassification",
    "FundamentalSolutions",
    "gbm_spec",
    "generic_spec",
    "scale_density",
    "speed_density",
    "classify_boundaries",
    "fundamental_solutions",
    "killed_psi",
]


@dataclass(frozen=True)
class DiffusionSpec:
    """Coefficients of an uncontrolled diffusion on (0, b) with kill rate r.

    ``kind`` is "gbm" (mu_tilde, sigma_tilde carry the multiplicative
    coefficients) or "generic" (drift/volatility are arbitrary callables).
    Derivative callables are optional for generic specs but required by the
    stopping-problem machinery.
    """

    drift: Callable[[float], float]
    volatility: Callable[[float], float]
    rate: float
    b: float = math.inf
    kind: str = "generic"
    mu_tilde: Optional[float] = None
    sigma_tilde: Optional[float] = None
    drift_prime: Optional[Callable[[float], float]] = None
    volatility_prime: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if self.rate <= 0:
            raise UnsupportedModelError(f"discount rate must be positive, got {self.rate}")
        if self.b <= 0:
            raise UnsupportedModelError(f"upper endpoint must be positive, got {self.b}")
        # Sampled sanity checks on a compact subinterval: positive volatility
        # and local integrability of (1+|mu|)/sigma^2.
        hi = min(self.b, 100.0)
        for x in np.geomspace(1e-3 * hi, 0.999 * hi, 25):
            s = self.volatility(x)
            if not (s > 0 and np.isfinite(s)):
                raise UnsupportedModelError(f"volatility must be positive, got {s} at x={x:g}")
            val = (1.0 + abs(self.drift(x))) / s**2
            if not np.isfinite(val):
                raise UnsupportedModelError(f"(1+|mu|)/sigma^2 not finite at x={x:g}")

    def contains(self, x: float) -> bool:
        return 0.0 < x < self.b

    def require_inside(self, x: float) -> None:
        if not self.contains(x):
            raise DomainError(f"state {x} outside interval (0, {self.b})")

    def sigma2(self, x: float) -> float:
        return self.volatility(x) ** 2

    def sigma2_prime(self, x: float) -> float:
        if self.volatility_prime is None:
            raise UnsupportedModelError("volatility derivative not supplied")
        return 2.0 * self.volatility(x) * self.volatility_prime(x)


def gbm_spec(mu_tilde: float, sigma_tilde: float, rate: float, b: float = math.inf) -> DiffusionSpec:
    """Geometric Brownian motion dX = mu_tilde X dt + sigma_tilde X dW."""
    if sigma_tilde <= 0:
        raise UnsupportedModelError(f"sigma_tilde must be positive, got {sigma_tilde}")
    return DiffusionSpec(
        drift=lambda x: mu_tilde * x,
        volatility=lambda x: sigma_tilde * x,
        rate=rate,
        b=b,
        kind="gbm",
        mu_tilde=mu_tilde,
        sigma_tilde=sigma_tilde,
        drift_prime=lambda x: mu_tilde,
        volatility_prime=lambda x: sigma_tilde,
    )


def generic_spec(
    drift,
    volatility,
    rate,
    b=math.inf,
    drift_prime=None,
    volatility_prime=None,
) -> DiffusionSpec:
    return DiffusionSpec(
        drift=drift,
        volatility=volatility,
        rate=rate,
        b=b,
        kind="generic",
        drift_prime=drift_prime,
        volatility_prime=volatility_prime,
    )


# --------------------------------------------------------------------------- #
# Scale and speed densities
# --------------------------------------------------------------------------- #

def scale_density(spec: DiffusionSpec, x: float, anchor: float = 1.0) -> float:
    """S'(x) with the integration constant fixed by S'(anchor) = 1."""
    spec.require_inside(x)
    if spec.kind == "gbm":
        return (x / anchor) ** (-2.0 * spec.mu_tilde / spec.sigma_tilde**2)
    # Logarithmic substitution t = e^s keeps the quadrature well conditioned
    # near the singular endpoint 0.
    val, err = quad(
        lambda s: 2.0 * spec.drift(math.exp(s)) / spec.sigma2(math.exp(s)) * math.exp(s),
        math.log(anchor),
        math.log(x),
        limit=200,
    )
    if not np.isfinite(val):
        raise NumericError(f"scale density integral diverged at x={x:g}")
    return math.exp(-val)


def speed_density(spec: DiffusionSpec, x: float, anchor: float = 1.0) -> float:
    """m'(x) = 2 / (sigma^2(x) S'(x))."""
    spec.require_inside(x)
    return 2.0 / (spec.sigma2(x) * scale_density(spec, x, anchor))


# --------------------------------------------------------------------------- #
# Feller boundary classification
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class BoundaryClassification:
    lower: str  # natural | exit | entrance | regular
    upper: str  # must be natural

    def lower_attainable(self) -> bool:
        return self.lower in ("exit", "regular")


def _diverges(partials: np.ndarray) -> bool:
    """Heuristic divergence test on a sequence of truncated improper integrals."""
    tail = partials[-4:]
    incr = np.diff(tail)
    scale = 1.0 + abs(tail[-1])
    growing = np.all(incr > 0) and incr[-1] > 0.5 * incr[0]
    return bool(not np.all(np.isfinite(tail)) or abs(tail[-1]) > 1e12 or (growing and incr[-1] > 1e-7 * scale))


def _feller_pair(spec: DiffusionSpec, c: float, toward_lower: bool, anchor: float):
    """Truncated Feller test integrals Sigma, N toward one endpoint.

    Sigma = int (S(c)-S(u)) m'(u) du, N = int (m(c)-m(u)) S'(u) du with both
    integrals taken between the endpoint and the interior reference c.
    Returns (sigma_partials, n_partials) over a geometric truncation sequence.
    """
    sp = lambda u: scale_density(spec, u, anchor)
    mp = lambda u: speed_density(spec, u, anchor)
    if toward_lower:
        cuts = c * np.geomspace(0.5, 1e-7, 9)
    else:
        if math.isinf(spec.b):
            cuts = c * np.geomspace(2.0, 1e7, 9)
        else:
            cuts = spec.b - (spec.b - c) * np.geomspace(0.5, 1e-7, 9)

    def s_between(a, b_):
        v, _ = quad(lambda s: sp(math.exp(s)) * math.exp(s), math.log(a), math.log(b_), limit=200)
        return v

    def m_between(a, b_):
        v, _ = quad(lambda s: mp(math.exp(s)) * math.exp(s), math.log(a), math.log(b_), limit=200)
        return v

    sig_parts, n_parts = [], []
    for a in cuts:
        lo, hi = (a, c) if toward_lower else (c, a)
        try:
            if toward_lower:
                sig = quad(lambda s: s_between(math.exp(s), c) * mp(math.exp(s)) * math.exp(s),
                           math.log(lo), math.log(hi), limit=100)[0]
                n = quad(lambda s: m_between(math.exp(s), c) * sp(math.exp(s)) * math.exp(s),
                         math.log(lo), math.log(hi), limit=100)[0]
            else:
                sig = quad(lambda s: s_between(c, math.exp(s)) * mp(math.exp(s)) * math.exp(s),
                           math.log(lo), math.log(hi), limit=100)[0]
                n = quad(lambda s: m_between(c, math.exp(s)) * sp(math.exp(s)) * math.exp(s),
                         math.log(lo), math.log(hi), limit=100)[0]
        except Exception as exc:  # quadrature blow-up counts as divergence evidence
            raise NumericError(f"Feller quadrature failed toward {'0' if toward_lower else 'b'}: {exc}")
        sig_parts.append(sig)
        n_parts.append(n)
    return np.array(sig_parts), np.array(n_parts)


def _classify_endpoint(spec: DiffusionSpec, c: float, toward_lower: bool, anchor: float) -> str:
    sig, n = _feller_pair(spec, c, toward_lower, anchor)
    sigma_inf = _diverges(sig)
    n_inf = _diverges(n)
    if sigma_inf and n_inf:
        return "natural"
    if sigma_inf:
        return "entrance"
    if n_inf:
        return "exit"
    return "regular"


def classify_boundaries(spec: DiffusionSpec, anchor: float = 1.0) -> BoundaryClassification:
    """Classify both endpoints by numeric Feller integral tests.

    Raises UnsupportedModelError when the upper boundary is not natural.
    """
    c = min(1.0, 0.5 * spec.b) if not math.isinf(spec.b) else 1.0
    lower = _classify_endpoint(spec, c, toward_lower=True, anchor=anchor)
    upper = _classify_endpoint(spec, c, toward_lower=False, anchor=anchor)
    if upper != "natural":
        raise UnsupportedModelError(f"upper boundary must be natural, classified {upper}")
    return BoundaryClassification(lower=lower, upper=upper)


# --------------------------------------------------------------------------- #
# Fundamental solutions
# --------------------------------------------------------------------------- #

@dataclass
class FundamentalSolutions:
    """psi/phi with derivative accessors, Wronskian B, scale/speed densities.

    psi is increasing positive, phi decreasing positive, and

        (psi'(x) phi(x) - phi'(x) psi(x)) / S'(x) = B  (constant).

    ``x_lo``/``x_hi`` bound the numerically valid domain; closed-form modes
    use the full interval.
    """

    spec: DiffusionSpec
    classification: BoundaryClassification
    psi: Callable[[float], float]
    psi_p: Callable[[float], float]
    psi_pp: Callable[[float], float]
    phi: Callable[[float], float]
    phi_p: Callable[[float], float]
    phi_pp: Callable[[float], float]
    wronskian_B: float
    anchor: float
    x_lo: float
    x_hi: float
    mode: str = "closed-form"
    kappa: Optional[float] = None
    theta: Optional[float] = None
    # debug hook: multiplies the reported Wronskian to let fault-injection
    # tests observe a broken invariant without touching psi/phi themselves
    _wronskian_scale: float = field(default=1.0, repr=False)

    def scale_density(self, x: float) -> float:
        return scale_density(self.spec, x, self.anchor)

    def speed_density(self, x: float) -> float:
        return speed_density(self.spec, x, self.anchor)

    def psi_ppp(self, x: float) -> float:
        """Third derivative from the differentiated ODE (never finite differences)."""
        return self._third(self.psi(x), self.psi_p(x), self.psi_pp(x), x)

    def phi_ppp(self, x: float) -> float:
        return self._third(self.phi(x), self.phi_p(x), self.phi_pp(x), x)

    def _third(self, u: float, up: float, upp: float, x: float) -> float:
        spec = self.spec
        if spec.drift_prime is None:
            raise UnsupportedModelError("third derivatives need analytic drift/volatility derivatives")
        r = spec.rate
        return (2.0 * ((r - spec.drift_prime(x)) * up - spec.drift(x) * upp)
                - spec.sigma2_prime(x) * upp) / spec.sigma2(x)

    @property
    def wronskian(self) -> float:
        return self.wronskian_B * self._wronskian_scale

    def wronskian_at(self, x: float) -> float:
        return ((self.psi_p(x) * self.phi(x) - self.phi_p(x) * self.psi(x))
                / self.scale_density(x)) * self._wronskian_scale


def _gbm_exponents(spec: DiffusionSpec):
    a = 0.5 - spec.mu_tilde / spec.sigma_tilde**2
    root = math.sqrt(a * a + 2.0 * spec.rate / spec.sigma_tilde**2)
    return a + root, a - root


def _closed_form_gbm(spec: DiffusionSpec, classification, anchor: float) -> FundamentalSolutions:
    kappa, theta = _gbm_exponents(spec)
    psi = lambda x: x**kappa
    phi = lambda x: x**theta
    # S'(anchor) = 1 normalization; kappa + theta - 1 = -2 mu/sigma^2 makes
    # the ratio below x-independent.
    B = (kappa - theta) * anchor ** (kappa + theta - 1.0)
    return FundamentalSolutions(
        spec=spec,
        classification=classification,
        psi=psi,
        psi_p=lambda x: kappa * x ** (kappa - 1.0),
        psi_pp=lambda x: kappa * (kappa - 1.0) * x ** (kappa - 2.0),
        phi=phi,
        phi_p=lambda x: theta * x ** (theta - 1.0),
        phi_pp=lambda x: theta * (theta - 1.0) * x ** (theta - 2.0),
        wronskian_B=B,
        anchor=anchor,
        x_lo=0.0,
        x_hi=spec.b,
        mode="closed-form",
        kappa=kappa,
        theta=theta,
    )


class _OdeSolution:
    """Dense solution of (G_r u) = 0 integrated in log-state.

    With s = ln x and w = x u'(x) the system reads du/ds = w,
    dw/ds = w + (2 x^2 / sigma^2)(r u - mu w / x), which removes the stiffness
    of the raw system across several decades of state.
    """

    def __init__(self, spec: DiffusionSpec, s0: float, s1: float, slope0: float):
        self.spec = spec

        def rhs(s, yv):
            x = math.exp(s)
            u, w = yv
            sig2 = spec.sigma2(x)
            return [w, w + (2.0 * x * x / sig2) * (spec.rate * u - spec.drift(x) * w / x)]

        sol = solve_ivp(
            rhs, (s0, s1), [1.0, slope0 * math.exp(s0)],
            method="LSODA", rtol=1e-11, atol=1e-250, dense_output=True,
        )
        if not sol.success:
            raise NumericError(f"fundamental-solution ODE integration failed: {sol.message}")
        self.sol = sol

    def eval(self, x: float):
        u, w = self.sol.sol(math.log(x))
        up = w / x
        upp = 2.0 * (self.spec.rate * u - self.spec.drift(x) * up) / self.spec.sigma2(x)
        return u, up, upp


def _generic_solutions(spec: DiffusionSpec, classification, anchor: float,
                       x_lo: float, x_hi: float) -> FundamentalSolutions:
    r = spec.rate

    def frozen_roots(x):
        mu, sig2 = spec.drift(x), spec.sigma2(x)
        disc = math.sqrt(mu * mu + 2.0 * r * sig2)
        return (-mu + disc) / sig2, (-mu - disc) / sig2

    # psi: integrate upward from near the lower endpoint; the increasing
    # solution dominates so contamination by phi decays like phi/psi.
    lam_plus, _ = frozen_roots(x_lo)
    psi_sol = _OdeSolution(spec, math.log(x_lo), math.log(x_hi), lam_plus)
    # phi: integrate downward from near the upper truncation with the decaying
    # far-field slope u'/u matched to the local exponent.
    _, lam_minus = frozen_roots(x_hi)
    phi_sol = _OdeSolution(spec, math.log(x_hi), math.log(x_lo), lam_minus)

    psi_a = psi_sol.eval(anchor)[0]
    phi_a = phi_sol.eval(anchor)[0]
    if psi_a <= 0 or phi_a <= 0:
        raise NumericError("fundamental solution not positive at the anchor")

    def make(solution, norm, idx):
        def f(x):
            return solution.eval(x)[idx] / norm
        return f

    fs = FundamentalSolutions(
        spec=spec,
        classification=classification,
        psi=make(psi_sol, psi_a, 0),
        psi_p=make(psi_sol, psi_a, 1),
        psi_pp=make(psi_sol, psi_a, 2),
        phi=make(phi_sol, phi_a, 0),
        phi_p=make(phi_sol, phi_a, 1),
        phi_pp=make(phi_sol, phi_a, 2),
        wronskian_B=0.0,
        anchor=anchor,
        x_lo=x_lo,
        x_hi=x_hi,
        mode="generic",
    )
    fs.wronskian_B = ((fs.psi_p(anchor) * fs.phi(anchor) - fs.phi_p(anchor) * fs.psi(anchor))
                      / scale_density(spec, anchor, anchor))
    if fs.wronskian_B <= 0:
        raise NumericError("non-positive Wronskian from generic solver")
    return fs


def fundamental_solutions(
    spec: DiffusionSpec,
    classification: Optional[BoundaryClassification] = None,
    anchor: float = 1.0,
    force_generic: bool = False,
    x_lo: float = 1e-3,
    x_max: float = 500.0,
) -> FundamentalSolutions:
    """Construct psi/phi for ``spec``.

    GBM uses the closed-form power solutions unless ``force_generic`` routes
    it through the ODE integrator (used for cross-mode validation).  The
    generic domain is [x_lo, min(b, x_max)].
    """
    if classification is None:
        classification = classify_boundaries(spec, anchor)
    if spec.kind == "gbm" and not force_generic:
        return _closed_form_gbm(spec, classification, anchor)
    x_hi = min(x_max, spec.b * (1.0 - 1e-9) if not math.isinf(spec.b) else x_max)
    return _generic_solutions(spec, classification, anchor, x_lo, x_hi)


def killed_psi(fs: FundamentalSolutions, z: float, x: float, deriv: int = 0) -> float:
    """Increasing fundamental solution of the diffusion killed at boundary z.

    z = 0 selects the limit: psi - (psi(0)/phi(0)) phi when 0 is regular,
    plain psi otherwise.
    """
    fs.spec.require_inside(x)
    p = (fs.psi, fs.psi_p, fs.psi_pp)[deriv]
    q = (fs.phi, fs.phi_p, fs.phi_pp)[deriv]
    if z == 0.0:
        if fs.classification.lower == "regular":
            eps = max(fs.x_lo, 1e-9)
            ratio = fs.psi(eps) / fs.phi(eps)
            return p(x) - ratio * q(x)
        return p(x)
    if not fs.spec.contains(z):
        raise DomainError(f"kill boundary {z} outside interval")
    return p(x) - (fs.psi(z) / fs.phi(z)) * q(x)
