"""Marginal value, associated stopping problem, Gittins-style signal."""

import numpy as np
import pytest

from supctrl.errors import DomainError

# [DERIVED] frozen oracles for the canonical fixture
HP_AT_1 = 1.468033682778696
HP_AT_2 = 3.993063871706802
FTILDE_AT_2 = 1.939241400253556


def test_hat_diffusion_coefficients(stopping):
    # drift picks up the volatility correction, kill rate is r minus drift slope
    assert stopping.hat.drift_hat(1.0) == pytest.approx(0.01 + 0.1 * 0.1, rel=1e-14)
    assert stopping.hat.rho(1.0) == pytest.approx(0.05 - 0.01, rel=1e-14)


def test_killed_harmonic_ode_residuals(stopping):
    for x in (0.5, 1.0, 3.0):
        for which in ("psi", "phi"):
            res = stopping.ode2_residual(x, which)
            assert abs(res) < 1e-10 * (1.0 + abs(stopping.fs.psi_p(x)))


def test_marginal_value_oracles(stopping):
    assert stopping.marginal_value(1.0) == pytest.approx(HP_AT_1, rel=1e-10)
    assert stopping.marginal_value(2.0) == pytest.approx(HP_AT_2, rel=1e-10)


def test_marginal_value_is_derivative_of_reflection_value(stopping, problem, solution):
    y = solution.y_star
    h = 1e-6
    for x in (0.8, 1.0, 2.5):
        fd = (problem.reflection_value_H(y, x + h)
              - problem.reflection_value_H(y, x - h)) / (2.0 * h)
        assert stopping.marginal_value(x) == pytest.approx(fd, rel=1e-7)


def test_marginal_value_extremal_form(stopping):
    for x in (0.7, 1.0, 1.2, 2.0):
        assert stopping.marginal_value_extremal_form(x) == pytest.approx(
            stopping.marginal_value(x), rel=1e-8)


def test_f_tilde_oracle_and_zero_at_threshold(stopping, solution):
    assert stopping.f_tilde(2.0) == pytest.approx(FTILDE_AT_2, rel=1e-10)
    assert stopping.f_tilde(solution.y_star) == pytest.approx(0.0, abs=1e-10)


def test_f_tilde_quotient_form(stopping):
    for x in (1.0, 1.5, 3.0):
        assert stopping.f_tilde_quotient(x) == pytest.approx(
            stopping.f_tilde(x), rel=1e-7)


def test_expected_f_tilde_reproduces_marginal_value(stopping):
    for x in (0.8, 1.0, 2.0):
        lhs = stopping.marginal_value(x)
        rhs = stopping.expected_f_tilde_at_supremum(x)
        assert rhs == pytest.approx(lhs, rel=1e-8)


def test_linkage_identity(stopping, solution):
    y = solution.y_star
    for x in np.linspace(y, 10.0, 25):
        assert abs(stopping.linkage_residual(x)) < 1e-8


def test_stopping_value_bounds(stopping):
    report = stopping.stopping_value_bounds_check()
    assert all(report.values())


def test_two_sided_exit_degenerates_to_harmonics(stopping):
    fs = stopping.fs
    # g = psi' on the boundary reproduces psi' inside: the exit value
    # operator is the identity on killed-harmonic data
    z, y, x = 0.5, 3.0, 1.2
    val = stopping.two_sided_exit_value(fs.psi_p, z, y, x)
    assert val == pytest.approx(fs.psi_p(x), rel=1e-10)


def test_two_sided_exit_rejects_bad_interval(stopping):
    with pytest.raises(DomainError):
        stopping.two_sided_exit_value(lambda x: x, 2.0, 1.0, 1.5)


def test_gittins_signal_monotone_side(stopping, solution):
    y = solution.y_star
    # strictly above the threshold the signal exceeds 1, strictly below it is under 1
    assert stopping.gittins_signal(1.15 * y) > 1.0
    assert stopping.gittins_signal(0.85 * y) < 1.0


def test_gittins_crossing_brackets_threshold(stopping, solution):
    cross = stopping.gittins_crossing()
    assert cross["contains_y_star"]
    assert cross["cell_width"] <= 0.005 * solution.y_star + 1e-12
