"""Scale and speed densities, boundary classification, fundamental solutions."""

import math

import numpy as np
import pytest

from supctrl.diffusion import (classify_boundaries, fundamental_solutions,
                               gbm_spec, generic_spec, killed_psi,
                               scale_density, speed_density)
from supctrl.expressions import parse_expression

# [DERIVED] closed-form exponents for mu=0.01, sigma=0.1, r=0.05:
# the positive and negative roots of (1/2)s^2 q(q-1) + m q - r = 0.
KAPPA = -0.5 + math.sqrt(10.25)
THETA = -0.5 - math.sqrt(10.25)


@pytest.fixture(scope="module")
def spec():
    return gbm_spec(0.01, 0.1, 0.05)


@pytest.fixture(scope="module")
def fs(spec):
    return fundamental_solutions(spec)


def test_scale_density_closed_form(spec):
    # [DERIVED] S'(x) = x^(-2 mu / sigma^2) = x^-2 for these coefficients
    for x in (0.25, 1.0, 3.0):
        assert scale_density(spec, x) == pytest.approx(x**-2.0, rel=1e-12)


def test_speed_density_relation(spec):
    for x in (0.25, 1.0, 3.0):
        expected = 2.0 / (spec.sigma2(x) * scale_density(spec, x))
        assert speed_density(spec, x) == pytest.approx(expected, rel=1e-12)


def test_boundary_classification(spec):
    cls = classify_boundaries(spec)
    assert cls.lower == "natural"
    assert cls.upper == "natural"
    assert not cls.lower_attainable()


def test_closed_form_exponents(fs):
    assert fs.kappa == pytest.approx(KAPPA, rel=1e-14)
    assert fs.theta == pytest.approx(THETA, rel=1e-14)
    assert fs.psi(2.0) == pytest.approx(2.0**KAPPA, rel=1e-14)
    assert fs.phi(2.0) == pytest.approx(2.0**THETA, rel=1e-14)


def test_wronskian_constant_and_positive(fs):
    vals = [fs.wronskian_at(x) for x in np.geomspace(0.05, 50.0, 40)]
    assert np.std(vals) / abs(np.mean(vals)) < 1e-10
    assert fs.wronskian_B > 0.0
    assert fs.wronskian_B == pytest.approx(vals[0], rel=1e-10)


@pytest.mark.parametrize("x", [0.1, 0.7, 1.0, 4.0, 25.0])
def test_harmonic_ode_residuals(spec, fs, x):
    for u, up, upp in ((fs.psi, fs.psi_p, fs.psi_pp),
                       (fs.phi, fs.phi_p, fs.phi_pp)):
        res = 0.5 * spec.sigma2(x) * upp(x) + spec.drift(x) * up(x) - spec.rate * u(x)
        assert abs(res) < 1e-10 * (1.0 + abs(u(x)))


def test_third_derivative_consistency(fs):
    h = 1e-5
    for x in (0.5, 1.0, 2.0):
        fd = (fs.psi_pp(x + h) - fs.psi_pp(x - h)) / (2.0 * h)
        assert fs.psi_ppp(x) == pytest.approx(fd, rel=1e-6)


def test_killed_solution_vanishes_at_kill_level(fs):
    z = 0.4
    assert killed_psi(fs, z, z) == pytest.approx(0.0, abs=1e-14)
    assert killed_psi(fs, z, 1.5) == pytest.approx(
        fs.psi(1.5) - fs.psi(z) / fs.phi(z) * fs.phi(1.5), rel=1e-12)


def test_killed_solution_natural_zero_limit(fs):
    # phi blows up at an unattainable lower endpoint, so the kill term drops out
    assert killed_psi(fs, 0.0, 2.0) == pytest.approx(fs.psi(2.0), rel=1e-12)
    assert killed_psi(fs, 0.0, 2.0, deriv=1) == pytest.approx(fs.psi_p(2.0), rel=1e-12)


def test_generic_mode_matches_closed_form(spec):
    gen = fundamental_solutions(spec, force_generic=True)
    ref = fundamental_solutions(spec)
    assert gen.mode == "generic"
    for x in np.geomspace(0.1, 20.0, 15):
        assert gen.psi(x) == pytest.approx(ref.psi(x), rel=1e-9)
        assert gen.phi(x) == pytest.approx(ref.phi(x), rel=1e-9)
        assert gen.psi_p(x) == pytest.approx(ref.psi_p(x), rel=1e-8)
        assert gen.phi_p(x) == pytest.approx(ref.phi_p(x), rel=1e-8)
    assert gen.wronskian_B == pytest.approx(ref.wronskian_B, rel=1e-9)


def test_generic_spec_from_expressions():
    drift = parse_expression("0.01*x")
    vol = parse_expression("0.1*x")
    spec = generic_spec(drift=drift, volatility=vol, rate=0.05,
                        drift_prime=drift.diff(), volatility_prime=vol.diff())
    fs = fundamental_solutions(spec, force_generic=True)
    assert fs.psi(2.0) == pytest.approx(2.0**KAPPA, rel=1e-9)


def test_anchor_normalization(spec):
    # ODE-mode solutions are normalized to 1 at the anchor; the closed-form
    # branch keeps the plain power functions instead
    fs = fundamental_solutions(spec, anchor=2.0, force_generic=True)
    assert fs.psi(2.0) == pytest.approx(1.0, rel=1e-12)
    assert fs.phi(2.0) == pytest.approx(1.0, rel=1e-12)
