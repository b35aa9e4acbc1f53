"""Closed-form equilibrium levels, growth, and the market-clearing oracle."""

from __future__ import annotations

import math

import numpy as np
import pytest

from carbonrisk.economy import (
    EconomyParams,
    consumption_cost_shift,
    consumption_growth,
    equilibrium_coefficients,
    equilibrium_residual,
    growth_law,
    lambda_coeffs,
    log_consumption,
    log_output,
    output_consumption_ratio,
    output_cost_shift,
    output_growth,
    psi_coeffs,
)
from carbonrisk.errors import PriceDominance, SingularEquilibrium
from carbonrisk.productivity import VarParams, stationary_moments
from carbonrisk.transition import EmissionsCostRate


def random_cost_rate(rng: np.random.Generator, n: int, tau_cap: float = 0.5) -> EmissionsCostRate:
    return EmissionsCostRate(
        tau_d=rng.uniform(0.0, tau_cap, n),
        zeta_d=rng.uniform(0.0, 1.5, (n, n)),
        kappa_d=rng.uniform(0.0, 1.5, n),
    )


def random_economy(rng: np.random.Generator, n: int) -> EconomyParams:
    psi = rng.uniform(0.15, 0.85, n)
    lam = rng.uniform(0.05, 1.0, (n, n))
    return EconomyParams(psi=psi, lam=lam)


def test_single_sector_zero_price_worked_example():
    econ = EconomyParams(psi=np.array([0.5]), lam=np.array([[0.5]]), phi=1.0)
    zero = EmissionsCostRate.zero(1)
    coef = equilibrium_coefficients(econ, zero)
    assert coef.psi_d[0] == pytest.approx(0.5)
    assert coef.lambda_d[0, 0] == pytest.approx(0.5)
    assert coef.e_ratio[0] == pytest.approx(2.0)
    # v = -phi w log e + w log Psi + lam log Lambda with w = psi/(1+phi) = 1/4
    assert coef.v[0] == pytest.approx(-math.log(2.0), rel=1e-14)
    assert coef.frak_v[0] == pytest.approx(-0.5 * math.log(2.0), rel=1e-14)
    # levels at zero productivity
    assert log_consumption(econ, zero, np.zeros(1))[0] == pytest.approx(-2 * math.log(2.0))
    assert log_output(econ, zero, np.zeros(1))[0] == pytest.approx(-math.log(2.0))
    res = equilibrium_residual(econ, zero, np.zeros(1), np.array([0.25]), np.array([0.5]))
    assert res.max_abs < 1e-14


def test_renormalization_enforces_constant_returns():
    econ = EconomyParams(
        psi=np.array([0.3, 0.4]),
        lam=np.array([[0.5, 0.2], [0.4, 0.3]]),
    )
    np.testing.assert_allclose(econ.lam.sum(axis=0), 1.0 - econ.psi, atol=1e-12)
    assert econ.constant_returns
    raw = EconomyParams(
        psi=np.array([0.3, 0.4]),
        lam=np.array([[0.5, 0.2], [0.4, 0.3]]),
        renormalize=False,
    )
    np.testing.assert_allclose(raw.lam, [[0.5, 0.2], [0.4, 0.3]])
    assert not raw.constant_returns


def test_cost_adjusted_coefficients_formulas(small_econ):
    d = EmissionsCostRate(
        tau_d=np.array([0.2, 0.1]),
        zeta_d=np.array([[0.05, 0.10], [0.15, 0.02]]),
        kappa_d=np.array([0.04, 0.08]),
    )
    psi_d = psi_coeffs(small_econ, d)
    np.testing.assert_allclose(
        psi_d, small_econ.psi * (1 - d.tau_d) / (1 + d.kappa_d), rtol=1e-14
    )
    lam_d = lambda_coeffs(small_econ, d)
    expect = np.empty((2, 2))
    for j in range(2):
        for i in range(2):
            expect[j, i] = (
                small_econ.lam[j, i]
                * (1 - d.tau_d[i])
                / (1 + d.zeta_d[j, i])
                * (1 + d.kappa_d[j])
                / (1 + d.kappa_d[i])
            )
    np.testing.assert_allclose(lam_d, expect, rtol=1e-14)


def test_zero_price_growth_identity(small_econ):
    rng = np.random.default_rng(7)
    theta = rng.normal(0.0, 0.02, (6, 2))
    zero = EmissionsCostRate.zero(2)
    grown = output_growth(small_econ, theta, zero, zero)
    lhs = np.eye(2) - small_econ.lam.T
    np.testing.assert_allclose(grown, np.linalg.solve(lhs, theta.T).T, atol=1e-13)
    np.testing.assert_allclose(
        consumption_growth(small_econ, theta, zero, zero), grown, atol=1e-13
    )


def test_log_output_is_consumption_plus_ratio(small_econ):
    d = EmissionsCostRate(
        tau_d=np.array([0.1, 0.05]),
        zeta_d=np.full((2, 2), 0.02),
        kappa_d=np.array([0.03, 0.01]),
    )
    a_level = np.array([0.3, -0.1])
    e_ratio = output_consumption_ratio(lambda_coeffs(small_econ, d))
    np.testing.assert_allclose(
        log_output(small_econ, d, a_level),
        log_consumption(small_econ, d, a_level) + np.log(e_ratio),
        rtol=1e-13,
    )


@pytest.mark.parametrize("n", [1, 2, 4])
def test_equilibrium_residual_random_instances(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(25):
        econ = random_economy(rng, n)
        d = random_cost_rate(rng, n)
        a_level = rng.normal(0.0, 1.0, n)
        c = np.exp(log_consumption(econ, d, a_level))
        y = np.exp(log_output(econ, d, a_level))
        res = equilibrium_residual(econ, d, a_level, c, y)
        assert res.max_abs <= 1e-9


def test_equilibrium_residual_flags_wrong_candidate(small_econ):
    zero = EmissionsCostRate.zero(2)
    a_level = np.zeros(2)
    c = np.exp(log_consumption(small_econ, zero, a_level))
    y = np.exp(log_output(small_econ, zero, a_level))
    res = equilibrium_residual(small_econ, zero, a_level, c, 1.2 * y)
    assert res.max_abs > 1e-3


def test_growth_law_moments(small_econ, small_var):
    moments = stationary_moments(small_var)
    zero = EmissionsCostRate.zero(2)
    d = EmissionsCostRate(
        tau_d=np.array([0.15, 0.08]),
        zeta_d=np.full((2, 2), 0.01),
        kappa_d=np.array([0.02, 0.05]),
    )
    law = growth_law(small_econ, moments, small_var.epsilon, d, zero)
    inv = np.linalg.inv(np.eye(2) - small_econ.lam.T)
    np.testing.assert_allclose(
        law.m_c,
        inv @ (moments.mu_bar + consumption_cost_shift(small_econ, d)
               - consumption_cost_shift(small_econ, zero)),
        rtol=1e-12,
    )
    np.testing.assert_allclose(
        law.m_y,
        inv @ (moments.mu_bar + output_cost_shift(small_econ, d)
               - output_cost_shift(small_econ, zero)),
        rtol=1e-12,
    )
    np.testing.assert_allclose(
        law.sigma_hat, inv @ moments.sigma_bar @ inv.T, rtol=1e-12
    )
    # the covariance ignores the cost rates entirely
    other = growth_law(small_econ, moments, small_var.epsilon, zero, d)
    np.testing.assert_allclose(law.sigma_hat, other.sigma_hat, rtol=1e-12)


def test_growth_law_scales_with_epsilon(small_econ, small_var):
    moments = stationary_moments(small_var)
    zero = EmissionsCostRate.zero(2)
    full = growth_law(small_econ, moments, 1.0, zero, zero)
    half = growth_law(small_econ, moments, 0.5, zero, zero)
    np.testing.assert_allclose(half.sigma_hat, 0.25 * full.sigma_hat, rtol=1e-12)


def test_singular_equilibrium_rejected():
    with pytest.raises(SingularEquilibrium):
        EconomyParams(
            psi=np.array([1e-15, 1e-15]),
            lam=np.array([[0.5, 0.5], [0.5, 0.5]]),
        )


def test_price_dominance_propagates(small_econ):
    d = EmissionsCostRate(
        tau_d=np.array([1.2, 0.1]), zeta_d=np.zeros((2, 2)), kappa_d=np.zeros(2)
    )
    with pytest.raises(PriceDominance):
        psi_coeffs(small_econ, d)
    with pytest.raises(PriceDominance):
        lambda_coeffs(small_econ, d)


def test_zero_input_share_is_harmless():
    econ = EconomyParams(
        psi=np.array([0.5, 0.4]),
        lam=np.array([[0.5, 0.0], [0.0, 0.6]]),
    )
    zero = EmissionsCostRate.zero(2)
    coef = equilibrium_coefficients(econ, zero)
    assert np.all(np.isfinite(coef.v)) and np.all(np.isfinite(coef.frak_v))
    a_level = np.array([0.1, 0.2])
    c = np.exp(log_consumption(econ, zero, a_level))
    y = np.exp(log_output(econ, zero, a_level))
    assert equilibrium_residual(econ, zero, a_level, c, y).max_abs <= 1e-9


def test_economy_params_validation():
    with pytest.raises(ValueError):
        EconomyParams(psi=np.array([0.0, 0.5]), lam=np.full((2, 2), 0.2))
    with pytest.raises(ValueError):
        EconomyParams(psi=np.array([0.5]), lam=np.full((2, 2), 0.2))
    with pytest.raises(ValueError):
        EconomyParams(psi=np.array([0.5, 0.5]), lam=np.full((2, 2), -0.1))
    with pytest.raises(ValueError):
        EconomyParams(psi=np.array([0.5, 0.5]), lam=np.full((2, 2), 1e-13))
    with pytest.raises(ValueError):
        EconomyParams(psi=np.array([0.5, 0.5]), lam=np.full((2, 2), 0.2), phi=-1.0)
