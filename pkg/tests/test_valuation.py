"""Value proxy, deterministic multiplier and forward value laws."""

from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import make_scenario
from carbonrisk.errors import NotSummable
from carbonrisk.productivity import (
    ProductivityState,
    VarParams,
    conditional_sum_law,
    simulate_paths,
    stationary_moments,
    upsilon_sequence,
)
from carbonrisk.valuation import (
    ORACLE_TRUNCATION_CAP,
    FirmSpec,
    check_well_posed,
    firm_value_mc_oracle,
    firm_value_proxy,
    output_shift_by_year,
    proxy_value_ratio,
    r_factor,
    systemic_vol,
    truncation_horizon,
    value_cond_law,
    value_forward_law,
    varrho,
)

R = 0.05


def make_firm(a, sigma_b=0.10, b_ratio=0.6, **kw) -> FirmSpec:
    defaults = dict(id="f1", group="g", f0=1.0, ead=1.0e6, lgd=0.45)
    defaults.update(kw)
    return FirmSpec(a=np.asarray(a, dtype=float), sigma_b=sigma_b, b_ratio=b_ratio, **defaults)


def series_r_factor(firm, econ, scenario, var, t, start_year, tol=1e-16):
    """Direct discounted sum of exp(varrho s + a frak_v), geometric remainder."""
    rho = varrho(firm, var, R)
    q = math.exp(rho)
    k = truncation_horizon(rho, tol)
    years = [min(start_year + t + s, scenario.t_star) for s in range(k + 1)]
    shifts = output_shift_by_year(econ, scenario, sorted(set(years)))
    total = sum(q**s * math.exp(float(firm.a @ shifts[y])) for s, y in enumerate(years))
    frozen = math.exp(float(firm.a @ shifts[scenario.t_star]))
    return total + frozen * q ** (k + 1) / (1.0 - q)


def test_varrho_matches_stationary_mean(small_var):
    firm = make_firm([0.15, 0.10])
    mu_bar = np.linalg.solve(np.eye(2) - small_var.gamma, small_var.mu)
    expect = 0.5 * 0.10**2 + float(firm.a @ mu_bar) - R
    assert varrho(firm, small_var, R) == pytest.approx(expect, rel=1e-14)
    assert varrho(firm, small_var, R) < 0


def test_truncation_horizon_values():
    assert truncation_horizon(-0.1, tol=1e-12) == 277
    assert truncation_horizon(-1e-6) == ORACLE_TRUNCATION_CAP
    with pytest.raises(NotSummable):
        truncation_horizon(0.0)
    with pytest.raises(NotSummable):
        truncation_horizon(0.3)


def test_r_factor_flat_scenario_is_geometric(small_var, small_econ, zero_price_scenario):
    firm = make_firm([0.15, 0.10])
    q = math.exp(varrho(firm, small_var, R))
    shifts = output_shift_by_year(small_econ, zero_price_scenario, [2021])
    expect = math.exp(float(firm.a @ shifts[2021])) / (1.0 - q)
    for t in (0, 1, 5, 9, 12):
        rt = r_factor(firm, small_econ, zero_price_scenario, small_var, t, r=R)
        assert rt == pytest.approx(expect, rel=1e-12)


@pytest.mark.parametrize("t", [0, 2, 3, 5, 8, 9, 10, 13])
def test_r_factor_matches_series_oracle(small_var, small_econ, t):
    # start three years before the window opens so every branch is exercised
    scenario = make_scenario(2, delta0=30.0, eta=0.15, t_circ=2024, t_star=2030)
    firm = make_firm([0.15, 0.10])
    rt = r_factor(firm, small_econ, scenario, small_var, t, r=R, start_year=2021)
    oracle = series_r_factor(firm, small_econ, scenario, small_var, t, 2021)
    assert rt == pytest.approx(oracle, rel=1e-10)


def test_r_factor_not_summable(small_var, small_econ, zero_price_scenario):
    firm = make_firm([0.15, 0.10], sigma_b=0.5)  # 0.125 + a mu_bar > r
    with pytest.raises(NotSummable, match="diverges"):
        r_factor(firm, small_econ, zero_price_scenario, small_var, 0, r=R)


def test_firm_value_proxy_decomposition(small_var, small_econ, priced_scenario):
    firm = make_firm([0.15, 0.10], f0=2.5)
    theta = np.array([0.02, -0.01])
    a_circ = np.array([0.05, 0.03])
    state = ProductivityState(t=4, theta=theta, a_circ=a_circ)
    w_t = -0.07
    value = firm_value_proxy(
        firm, small_econ, priced_scenario, small_var, state, w_t, r=R
    )
    rt = r_factor(firm, small_econ, priced_scenario, small_var, 4, r=R)
    shifts = output_shift_by_year(small_econ, priced_scenario, [2021])
    expect = 2.5 * rt * math.exp(float(firm.a @ a_circ) - float(firm.a @ shifts[2021]) + w_t)
    assert value == pytest.approx(expect, rel=1e-12)

    # V_t / F_t depends on the date only through R_t and the current shift
    ratio = proxy_value_ratio(firm, small_econ, priced_scenario, small_var, 4, r=R)
    shifts4 = output_shift_by_year(small_econ, priced_scenario, [2025])
    assert ratio == pytest.approx(rt * math.exp(-float(firm.a @ shifts4[2025])), rel=1e-12)


def test_value_cond_law_matches_proxy(small_var, small_econ, priced_scenario):
    firm = make_firm([0.15, 0.10], f0=1.7)
    a_circ = np.array([0.04, -0.02])
    law = value_cond_law(firm, small_econ, priced_scenario, small_var, 3, a_circ, r=R)
    state = ProductivityState(t=3, theta=np.zeros(2), a_circ=a_circ)
    proxy = firm_value_proxy(firm, small_econ, priced_scenario, small_var, state, 0.0, r=R)
    assert law.mean_log == pytest.approx(math.log(proxy), rel=1e-12)
    assert law.var_log == pytest.approx(3 * 0.10**2, rel=1e-14)
    assert law.std_log == pytest.approx(math.sqrt(law.var_log))


def test_systemic_vol_enumeration(small_var):
    firm = make_firm([0.15, 0.10])
    a, sig, gam = firm.a, small_var.sigma, small_var.gamma
    v1 = math.sqrt(float(a @ sig @ a))
    assert systemic_vol(firm, small_var, 1) == pytest.approx(v1, rel=1e-14)
    au = a @ (np.eye(2) + gam)
    v2 = math.sqrt(float(a @ sig @ a) + float(au @ sig @ au))
    assert systemic_vol(firm, small_var, 2) == pytest.approx(v2, rel=1e-14)
    seq = upsilon_sequence(small_var.gamma, 4)
    v4 = math.sqrt(sum(float((a @ u) @ sig @ (a @ u)) for u in seq))
    assert systemic_vol(firm, small_var, 4) == pytest.approx(v4, rel=1e-14)


def test_value_forward_law_moments(small_var, small_econ, priced_scenario):
    firm = make_firm([0.15, 0.10])
    theta_t = np.array([0.02, -0.01])
    a_circ = np.array([0.03, 0.01])
    t, T = 2, 3
    law = value_forward_law(
        firm, small_econ, priced_scenario, small_var, t, T, a_circ, theta_t, r=R
    )
    mean_sum, cov_sum = conditional_sum_law(small_var, theta_t, T)
    rt = r_factor(firm, small_econ, priced_scenario, small_var, t + T, r=R)
    shifts = output_shift_by_year(small_econ, priced_scenario, [2021])
    mean_expected = (
        float(firm.a @ a_circ)
        - float(firm.a @ shifts[2021])
        + math.log(rt)
        + float(firm.a @ mean_sum)
    )
    assert law.mean_log == pytest.approx(mean_expected, rel=1e-12)
    var_expected = 0.10**2 * (t + T) + float(firm.a @ cov_sum @ firm.a)
    assert law.var_log == pytest.approx(var_expected, rel=1e-12)

    with pytest.raises(ValueError, match=">= 1"):
        value_forward_law(
            firm, small_econ, priced_scenario, small_var, t, 0, a_circ, theta_t, r=R
        )


def test_value_forward_law_against_simulation(small_var, small_econ, priced_scenario):
    firm = make_firm([0.15, 0.10])
    theta0 = np.array([0.015, -0.005])
    T, m = 3, 20000
    law = value_forward_law(
        firm, small_econ, priced_scenario, small_var, 0, T, np.zeros(2), theta0, r=R
    )
    ens = simulate_paths(small_var, horizon=T, n_paths=m, seed=907, theta0=theta0)
    x = ens.a_circ[:, T, :] @ firm.a
    rt = r_factor(firm, small_econ, priced_scenario, small_var, T, r=R)
    shifts = output_shift_by_year(small_econ, priced_scenario, [2021])
    pred_mean = law.mean_log - math.log(rt) + float(firm.a @ shifts[2021])
    se_mean = float(np.std(x, ddof=1)) / math.sqrt(m)
    assert abs(float(np.mean(x)) - pred_mean) <= 4 * se_mean
    pred_var = law.var_log - 0.10**2 * T
    s2 = float(np.var(x, ddof=1))
    se_var = s2 * math.sqrt(2.0 / (m - 1))
    assert abs(s2 - pred_var) <= 4 * se_var


def test_check_well_posed_passes_and_bounds(small_var):
    firm = make_firm([0.15, 0.10])
    report = check_well_posed([firm], small_var, R)
    assert report.passed and report.varrho_pass and report.rho_pass
    assert report.varrho[0] == pytest.approx(varrho(firm, small_var, R), rel=1e-14)
    mu_bar = stationary_moments(small_var).mu_bar
    op = float(np.linalg.norm(small_var.gamma, 2))
    top = float(np.max(np.linalg.eigvalsh(small_var.sigma)))
    expect_rho = (
        float(firm.a @ mu_bar)
        + 0.5 * firm.sigma_b**2
        + 0.5 * float(firm.a @ firm.a) * top / (1.0 - op) ** 2
    )
    assert report.rho == pytest.approx(expect_rho, rel=1e-12)
    assert report.rho > report.varrho[0] + R  # bound dominates the summability exponent
    assert not report.norm_gap


def test_check_well_posed_norm_gap():
    var = VarParams(
        mu=np.array([0.001, 0.001]),
        gamma=np.array([[0.5, 0.9], [0.0, 0.5]]),
        sigma=np.eye(2) * 1e-4,
        epsilon=1.0,
    )
    firm = make_firm([0.05, 0.05], sigma_b=0.05)
    report = check_well_posed([firm], var, R)
    assert report.gamma_spectral_radius == pytest.approx(0.5)
    assert report.gamma_operator_norm > 1.0
    assert report.norm_gap
    assert report.rho is None and not report.rho_pass and not report.passed


def test_check_well_posed_varrho_failure(small_var):
    bad = make_firm([0.15, 0.10], sigma_b=0.5)
    report = check_well_posed([bad], small_var, R)
    assert not report.varrho_pass and report.varrho[0] > 0


def test_mc_oracle_zero_noise_equals_proxy(small_econ, priced_scenario):
    var = VarParams(
        mu=np.array([0.008, 0.004]),
        gamma=np.array([[0.30, 0.10], [0.05, 0.20]]),
        sigma=np.array([[4.0e-4, 5.0e-5], [5.0e-5, 2.5e-4]]),
        epsilon=0.0,
    )
    firm = make_firm([0.15, 0.10])
    mu_bar = stationary_moments(var).mu_bar
    state = ProductivityState(t=0, theta=mu_bar, a_circ=np.zeros(2))
    est, se = firm_value_mc_oracle(
        firm, small_econ, priced_scenario, var, state, r=R, n_paths=1, seed=3
    )
    ratio = proxy_value_ratio(firm, small_econ, priced_scenario, var, 0, r=R)
    assert se == 0.0
    assert abs(est - ratio) < 1e-10 * ratio


def test_mc_oracle_rejects_explosive_value(small_econ, priced_scenario):
    var = VarParams(
        mu=np.array([0.03, 0.03]),
        gamma=np.array([[0.30, 0.10], [0.05, 0.20]]),
        sigma=np.array([[4.0e-4, 5.0e-5], [5.0e-5, 2.5e-4]]),
        epsilon=1.0,
    )
    firm = make_firm([0.9, 0.9], sigma_b=0.25)
    state = ProductivityState(t=0, theta=np.zeros(2), a_circ=np.zeros(2))
    with pytest.raises(NotSummable):
        firm_value_mc_oracle(
            firm, small_econ, priced_scenario, var, state, r=R, n_paths=4, seed=3
        )


def test_firm_spec_validation():
    good = make_firm([0.1, 0.1], b_ratio=0.5)
    assert good.log_barrier == pytest.approx(math.log(0.5))
    with pytest.raises(ValueError, match="sigma_b"):
        make_firm([0.1, 0.1], sigma_b=0.0)
    with pytest.raises(ValueError, match="f0"):
        make_firm([0.1, 0.1], f0=0.0)
    with pytest.raises(ValueError, match="b_ratio"):
        make_firm([0.1, 0.1], b_ratio=-1.0)
    with pytest.raises(ValueError, match="ead"):
        make_firm([0.1, 0.1], ead=0.0)
    with pytest.raises(ValueError, match="lgd"):
        make_firm([0.1, 0.1], lgd=0.0)
    with pytest.raises(ValueError, match="lgd"):
        make_firm([0.1, 0.1], lgd=1.2)
    assert make_firm([0.1, 0.1], lgd=1.0).lgd == 1.0
