"""Closed-form credit measures and their Monte Carlo counterparts."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from conftest import make_scenario
from carbonrisk.credit import (
    Portfolio,
    RiskConfig,
    _quantile_estimates,
    bump_scenario,
    conditional_loss,
    default_probability,
    expected_loss,
    gauss_affine_integral,
    loss_sensitivity,
    mc_risk_estimates,
    tail_order_statistic,
    unexpected_loss_one_year,
)
from carbonrisk.economy import EconomyParams
from carbonrisk.errors import QuantileUndefinedWarning
from carbonrisk.productivity import VarParams, simulate_paths, stationary_moments
from carbonrisk.transition import carbon_price
from carbonrisk.valuation import (
    FirmSpec,
    output_shift_by_year,
    r_factor,
    systemic_vol,
    value_forward_law,
)

R = 0.05


def make_firm(a, sigma_b=0.10, b_ratio=0.6, **kw) -> FirmSpec:
    defaults = dict(id="f1", group="g", f0=1.0, ead=1.0e6, lgd=0.45)
    defaults.update(kw)
    return FirmSpec(a=np.asarray(a, dtype=float), sigma_b=sigma_b, b_ratio=b_ratio, **defaults)


@pytest.fixture
def one_sector():
    var = VarParams(
        mu=np.array([0.006]),
        gamma=np.array([[0.40]]),
        sigma=np.array([[3.0e-4]]),
        epsilon=1.0,
    )
    econ = EconomyParams(psi=np.array([0.40]), lam=np.array([[0.60]]))
    scenario = make_scenario(1, delta0=30.0, eta=0.10, name="one")
    return var, econ, scenario


def test_gauss_affine_integral_spots():
    assert gauss_affine_integral(0.0, 1.7) == 0.5
    assert gauss_affine_integral(0.8, 0.0) == pytest.approx(norm.cdf(0.8), rel=1e-15)
    a, b = 0.7, -1.3
    numeric, _ = quad(
        lambda z: norm.cdf(a + b * z) * norm.pdf(z), -12, 12,
        epsabs=1e-13, epsrel=1e-13,
    )
    assert gauss_affine_integral(a, b) == pytest.approx(numeric, abs=1e-11)


def test_conditional_loss_indicator_at_time_zero(small_var, small_econ, zero_price_scenario):
    # a zero loading keeps mean_log = log(R_0) in floats, so exact ties are possible
    base = make_firm([0.0, 0.0], sigma_b=0.12, f0=1.0)
    rt = r_factor(base, small_econ, zero_price_scenario, small_var, 0, r=R)
    cases = {
        rt * (1.0 - 1e-9): 0.0,
        rt: 0.5,
        rt * (1.0 + 1e-9): 1.0,
    }
    for ratio, indicator in cases.items():
        firm = make_firm([0.0, 0.0], sigma_b=0.12, f0=1.0, b_ratio=ratio)
        port = Portfolio(firms=(firm,))
        loss = conditional_loss(
            port, small_econ, zero_price_scenario, small_var, 0, np.zeros(2), r=R
        )
        assert loss == firm.ead * firm.lgd * indicator


def test_conditional_loss_sums_gaussian_tails(small_var, small_econ, priced_scenario):
    firms = (
        make_firm([0.15, 0.10], id="a", b_ratio=12.0),
        make_firm([0.05, 0.20], id="b", sigma_b=0.2, b_ratio=20.0, ead=2.0e6, lgd=0.6),
    )
    port = Portfolio(firms=firms)
    a_circ = np.array([0.03, -0.01])
    t = 4
    shifts = output_shift_by_year(small_econ, priced_scenario, [2021])
    total = 0.0
    for f in firms:
        rt = r_factor(f, small_econ, priced_scenario, small_var, t, r=R)
        mean = math.log(f.f0) + float(f.a @ a_circ) - float(f.a @ shifts[2021]) + math.log(rt)
        x = (math.log(f.b_ratio * f.f0) - mean) / (f.sigma_b * math.sqrt(t))
        total += f.ead * f.lgd * norm.cdf(x)
    got = conditional_loss(port, small_econ, priced_scenario, small_var, t, a_circ, r=R)
    assert got == pytest.approx(total, rel=1e-12)


def test_default_probability_zero_loading_hand_value(small_var, small_econ, zero_price_scenario):
    firm = make_firm([0.0, 0.0], sigma_b=0.15, b_ratio=0.25)
    t, horizon = 2, 3
    rt = r_factor(firm, small_econ, zero_price_scenario, small_var, t + horizon, r=R)
    x = (math.log(0.25) - math.log(rt)) / (0.15 * math.sqrt(t + horizon))
    pd = default_probability(
        firm, small_econ, zero_price_scenario, small_var, t, horizon,
        np.zeros(2), np.zeros(2), r=R,
    )
    assert pd == pytest.approx(norm.cdf(x), rel=1e-12)


def test_default_probability_against_indicator_mc(small_var, small_econ, priced_scenario):
    firm = make_firm([0.15, 0.10], sigma_b=0.18, b_ratio=24.0)
    theta0 = np.array([0.01, 0.002])
    pd = default_probability(
        firm, small_econ, priced_scenario, small_var, 0, 1, np.zeros(2), theta0, r=R
    )
    m = 40000
    ens = simulate_paths(small_var, horizon=1, n_paths=m, seed=515, theta0=theta0)
    rng = np.random.default_rng(99)
    shifts = output_shift_by_year(small_econ, priced_scenario, [2021])
    rt = r_factor(firm, small_econ, priced_scenario, small_var, 1, r=R)
    log_v = (
        math.log(firm.f0)
        + ens.a_circ[:, 1, :] @ firm.a
        - float(firm.a @ shifts[2021])
        + math.log(rt)
        + rng.normal(0.0, firm.sigma_b, size=m)
    )
    hits = log_v < math.log(firm.b_ratio * firm.f0)
    p_hat = hits.mean()
    se = math.sqrt(p_hat * (1.0 - p_hat) / m)
    assert 0.001 < pd < 0.999
    assert abs(pd - p_hat) <= 4 * se


def test_expected_loss_is_severity_weighted_pd(small_var, small_econ, priced_scenario):
    firms = (
        make_firm([0.15, 0.10], id="a", b_ratio=15.0),
        make_firm([0.05, 0.20], id="b", b_ratio=25.0, ead=3.0e6, lgd=0.2),
    )
    port = Portfolio(firms=firms)
    theta0 = np.array([0.01, -0.01])
    el = expected_loss(
        port, small_econ, priced_scenario, small_var, 1, 2, np.zeros(2), theta0, r=R
    )
    expect = sum(
        f.ead * f.lgd * default_probability(
            f, small_econ, priced_scenario, small_var, 1, 2, np.zeros(2), theta0, r=R
        )
        for f in firms
    )
    assert el == pytest.approx(expect, rel=1e-14)


def test_unexpected_loss_zero_systemic_noise_is_exactly_zero(small_econ, priced_scenario):
    var = VarParams(
        mu=np.array([0.008, 0.004]),
        gamma=np.array([[0.30, 0.10], [0.05, 0.20]]),
        sigma=np.array([[4.0e-4, 5.0e-5], [5.0e-5, 2.5e-4]]),
        epsilon=0.0,
    )
    port = Portfolio(firms=(make_firm([0.15, 0.10], b_ratio=15.0),))
    for t in (0, 1, 2, 3, 5, 7):
        ul = unexpected_loss_one_year(
            port, small_econ, priced_scenario, var, t, np.zeros(2),
            stationary_moments(var).mu_bar, alpha=0.99, r=R,
        )
        assert ul == 0.0


def test_unexpected_loss_closed_form_pieces(small_var, small_econ, priced_scenario):
    firm = make_firm([0.15, 0.10], sigma_b=0.14, b_ratio=15.0)
    port = Portfolio(firms=(firm,))
    theta0 = np.array([0.012, 0.001])
    t, alpha = 2, 0.99
    a_circ = np.array([0.02, 0.01])
    law = value_forward_law(
        firm, small_econ, priced_scenario, small_var, t, 1, a_circ, theta0, r=R
    )
    s1 = systemic_vol(firm, small_var, 1)
    scale = firm.sigma_b * math.sqrt(t + 1)
    log_b = math.log(firm.b_ratio * firm.f0)
    z = norm.ppf(alpha)
    stressed = norm.cdf((s1 * z + log_b - law.mean_log) / scale)
    pd = norm.cdf((log_b - law.mean_log) / math.hypot(scale, s1))
    expect = firm.ead * firm.lgd * (stressed - pd)
    got = unexpected_loss_one_year(
        port, small_econ, priced_scenario, small_var, t, a_circ, theta0,
        alpha=alpha, r=R,
    )
    assert got == pytest.approx(expect, rel=1e-12)
    assert got > 0


def test_unexpected_loss_against_path_quantile(one_sector):
    var, econ, scenario = one_sector
    firms = (
        make_firm([0.25], id="a", sigma_b=0.12, b_ratio=18.0),
        make_firm([0.25], id="b", sigma_b=0.12, b_ratio=21.0, ead=2.0e6),
    )
    port = Portfolio(firms=firms)
    theta0 = stationary_moments(var).mu_bar
    alpha = 0.99
    ul = unexpected_loss_one_year(
        port, econ, scenario, var, 0, np.zeros(1), theta0, alpha=alpha, r=R
    )
    m = 50000
    ens = simulate_paths(var, horizon=1, n_paths=m, seed=2718, theta0=theta0)
    shifts = output_shift_by_year(econ, scenario, [2021])
    losses = np.zeros(m)
    for f in firms:
        rt = r_factor(f, econ, scenario, var, 1, r=R)
        mean = (
            math.log(f.f0)
            + ens.a_circ[:, 1, :] @ f.a
            - float(f.a @ shifts[2021])
            + math.log(rt)
        )
        x = (math.log(f.b_ratio * f.f0) - mean) / (f.sigma_b * math.sqrt(1.0))
        losses += f.ead * f.lgd * norm.cdf(x)
    ul_mc = float(np.quantile(losses, alpha)) - float(losses.mean())
    assert ul == pytest.approx(ul_mc, rel=0.02)


def test_tail_order_statistic_rank_and_warning():
    losses = np.arange(1.0, 11.0)
    value, rank = tail_order_statistic(losses, 0.35)
    assert (value, rank) == (4.0, 4)
    with pytest.warns(QuantileUndefinedWarning, match="sample"):
        value, rank = tail_order_statistic(losses, 0.95)
    assert (value, rank) == (10.0, 10)


def test_quantile_estimates_hand_values():
    rng = np.random.default_rng(12)
    losses = np.arange(100.0)
    rng.shuffle(losses)
    ul, es, ul_se, es_se = _quantile_estimates(losses, 0.9)
    assert ul == pytest.approx(89.0 - 49.5)
    assert es == pytest.approx(np.mean(np.arange(89.0, 100.0)))
    assert ul_se > 0 and es_se > 0


def test_bump_scenario_paths(priced_scenario):
    years = np.arange(2021, 2031)
    base = carbon_price(priced_scenario.schedule, years)
    span = 9

    flat = bump_scenario(priced_scenario, 0.0, 0.01)
    np.testing.assert_array_equal(carbon_price(flat.schedule, years), base)

    bumped = bump_scenario(priced_scenario, 1.0, 0.01)
    prices = carbon_price(bumped.schedule, years)
    assert prices[0] == base[0]
    np.testing.assert_allclose(prices[1:], base[1:] + 0.01, rtol=0, atol=1e-12)

    ramp = bump_scenario(priced_scenario, np.arange(1.0, span + 1), 0.5)
    prices = carbon_price(ramp.schedule, years)
    np.testing.assert_allclose(prices[1:], base[1:] + 0.5 * np.arange(1.0, span + 1))

    with pytest.raises(ValueError, match="one entry per"):
        bump_scenario(priced_scenario, np.ones(span + 1), 0.01)
    with pytest.raises(ValueError, match="negative"):
        bump_scenario(priced_scenario, -1.0, 1e6)


def test_loss_sensitivity_zero_direction_exact(small_var, small_econ, priced_scenario):
    port = Portfolio(firms=(make_firm([0.15, 0.10], b_ratio=15.0),))
    config = RiskConfig(n_paths=400, alpha=0.95, horizon=1, seed=11, theta_fd=0.01)
    sens, base = loss_sensitivity(
        port, small_econ, priced_scenario, small_var, config, 0.0, r=R,
        years=[2021, 2024, 2027],
    )
    for arr in (sens.pd, sens.el_total, sens.el_group, sens.ul_total,
                sens.ul_group, sens.es_total, sens.es_group):
        assert np.all(arr == 0.0)
    assert base.el_total.shape == (3,)


def test_loss_sensitivity_positive_direction(small_var, small_econ, priced_scenario):
    port = Portfolio(firms=(make_firm([0.15, 0.10], b_ratio=15.0),))
    config = RiskConfig(n_paths=400, alpha=0.95, horizon=1, seed=11, theta_fd=0.5)
    sens, _ = loss_sensitivity(
        port, small_econ, priced_scenario, small_var, config, 1.0, r=R,
        years=[2024, 2028],
    )
    assert np.all(sens.el_total > 0)


def test_mc_risk_estimates_deterministic(small_var, small_econ, priced_scenario):
    port = Portfolio(firms=(
        make_firm([0.15, 0.10], id="a", b_ratio=15.0),
        make_firm([0.05, 0.20], id="b", group="h", b_ratio=18.0),
    ))
    config = RiskConfig(n_paths=300, alpha=0.95, horizon=1, seed=5)
    est1 = mc_risk_estimates(port, small_econ, priced_scenario, small_var, config, r=R)
    est2 = mc_risk_estimates(port, small_econ, priced_scenario, small_var, config, r=R)
    np.testing.assert_array_equal(est1.pd, est2.pd)
    np.testing.assert_array_equal(est1.ul_total, est2.ul_total)
    np.testing.assert_array_equal(est1.es_group, est2.es_group)
    assert est1.years == tuple(range(2021, 2031))
    assert est1.group_labels == ("g", "h")
    # ES sits at or above the VaR level, hence above EL + UL is not implied,
    # but ES >= UL + EL always holds within each cell
    assert np.all(est1.es_total >= est1.ul_total + est1.el_total - 1e-9)


def test_mc_risk_estimates_window_validation(small_var, small_econ, priced_scenario):
    port = Portfolio(firms=(make_firm([0.15, 0.10], b_ratio=15.0),))
    config = RiskConfig(n_paths=50, alpha=0.9, horizon=1, seed=5)
    with pytest.raises(ValueError, match="precede"):
        mc_risk_estimates(
            port, small_econ, priced_scenario, small_var, config, r=R, years=[2019]
        )
    short = simulate_paths(small_var, horizon=2, n_paths=50, seed=5)
    with pytest.raises(ValueError, match="shorter"):
        mc_risk_estimates(
            port, small_econ, priced_scenario, small_var, config, r=R,
            years=[2021, 2027], ensemble=short,
        )


def test_portfolio_validation():
    f1 = make_firm([0.1, 0.1], id="x")
    with pytest.raises(ValueError, match="at least one"):
        Portfolio(firms=())
    with pytest.raises(ValueError, match="unique"):
        Portfolio(firms=(f1, make_firm([0.2, 0.1], id="x")))
    with pytest.raises(ValueError, match="factor dimension"):
        Portfolio(firms=(f1, make_firm([0.2, 0.1, 0.3], id="y")))
    port = Portfolio(firms=(
        make_firm([0.1, 0.1], id="b1", group="beta"),
        make_firm([0.1, 0.1], id="a1", group="alpha", ead=2.0e6, lgd=0.5, b_ratio=0.4, f0=2.0),
        make_firm([0.1, 0.1], id="b2", group="beta"),
    ))
    assert port.group_labels == ("beta", "alpha")  # first-appearance order
    assert port.members("beta") == (0, 2)
    with pytest.raises(KeyError):
        port.members("gamma")
    np.testing.assert_allclose(port.severities, [0.45e6, 1.0e6, 0.45e6])
    assert port.log_barriers[1] == pytest.approx(math.log(0.4 * 2.0))
    assert port.n_firms == 3 and port.n_sectors == 2


def test_risk_config_validation():
    with pytest.raises(ValueError, match="n_paths"):
        RiskConfig(n_paths=1)
    with pytest.raises(ValueError, match="alpha"):
        RiskConfig(alpha=1.0)
    with pytest.raises(ValueError, match="horizon"):
        RiskConfig(horizon=0)
    with pytest.raises(ValueError, match="theta_fd"):
        RiskConfig(theta_fd=0.0)
    with pytest.raises(ValueError, match="workers"):
        RiskConfig(workers=0)
