"""Portfolio credit risk on top of the log-Gaussian firm-value proxy.

Default of firm n at date t is the event {V_t < barrier_n}.  Conditioning
on the systemic productivity path makes defaults independent across firms
(only the idiosyncratic Brownian term is left), so the conditional loss is
a sum of exposure-weighted Gaussian tail probabilities.  Forward-looking
probabilities of default integrate the systemic innovations as well and
stay in closed form.  Monte Carlo estimators average those closed forms
over simulated systemic paths rather than simulating defaults, which
removes the idiosyncratic noise from the estimator entirely.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.stats import norm

from .economy import EconomyParams
from .errors import QuantileUndefinedWarning
from .productivity import PathEnsemble, VarParams, simulate_paths, upsilon_sequence
from .transition import CarbonPriceSchedule, TransitionScenario, carbon_price
from .valuation import (
    FirmSpec,
    _r_factor_from_cache,
    _ShiftCache,
    systemic_vol,
    value_cond_law,
    value_forward_law,
    varrho,
)

Array = NDArray[np.float64]

UL_STDERR_BATCHES = 10


def gauss_affine_integral(a: float, b: float) -> float:
    """E[Phi(a + b Z)] for standard normal Z, which equals Phi(a / sqrt(1 + b^2))."""
    return float(norm.cdf(a / math.sqrt(1.0 + b * b)))


@dataclass(frozen=True, eq=False)
class Portfolio:
    """A fixed set of obligors partitioned into reporting groups."""

    firms: tuple[FirmSpec, ...]

    def __post_init__(self) -> None:
        firms = tuple(self.firms)
        if not firms:
            raise ValueError("portfolio must contain at least one firm")
        ids = [f.id for f in firms]
        if len(set(ids)) != len(ids):
            raise ValueError("firm ids must be unique")
        dims = {f.a.shape[0] for f in firms}
        if len(dims) != 1:
            raise ValueError("all firms must load on the same factor dimension")
        object.__setattr__(self, "firms", firms)

    @property
    def n_firms(self) -> int:
        return len(self.firms)

    @property
    def n_sectors(self) -> int:
        return self.firms[0].a.shape[0]

    @property
    def group_labels(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for f in self.firms:
            seen.setdefault(f.group, None)
        return tuple(seen)

    def members(self, label: str) -> tuple[int, ...]:
        out = tuple(i for i, f in enumerate(self.firms) if f.group == label)
        if not out:
            raise KeyError(f"no firms in group {label!r}")
        return out

    @property
    def loadings(self) -> Array:
        return np.array([f.a for f in self.firms])

    @property
    def sigma_b(self) -> Array:
        return np.array([f.sigma_b for f in self.firms])

    @property
    def log_barriers(self) -> Array:
        """Absolute log default barriers, log(b_ratio * f0)."""
        return np.array([math.log(f.b_ratio * f.f0) for f in self.firms])

    @property
    def severities(self) -> Array:
        """Loss amount per unit default probability, EAD * LGD."""
        return np.array([f.ead * f.lgd for f in self.firms])


@dataclass(frozen=True)
class RiskConfig:
    """Monte Carlo and reporting settings for portfolio risk runs."""

    n_paths: int = 5000
    alpha: float = 0.99
    horizon: int = 1
    seed: int = 0
    theta_fd: float = 0.01
    workers: int = 1

    def __post_init__(self) -> None:
        if self.n_paths < 2:
            raise ValueError("n_paths must be at least 2")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.theta_fd <= 0:
            raise ValueError("theta_fd must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


def _tail_probability(x: Array, scale: float) -> Array:
    """Phi(x / scale) with the scale -> 0 limit (indicator with 1/2 at ties)."""
    if scale > 0.0:
        return np.asarray(norm.cdf(x / scale), dtype=float)
    return np.where(x > 0.0, 1.0, np.where(x == 0.0, 0.5, 0.0))


def conditional_loss(
    portfolio: Portfolio,
    econ: EconomyParams,
    scenario: TransitionScenario,
    var: VarParams,
    t: int,
    a_circ: Array,
    *,
    r: float,
    start_year: int | None = None,
) -> float:
    """Loss at date t given the systemic path: sum of EAD LGD Phi((log B - m)/(sigma_b sqrt(t))).

    At t = 0 the Gaussian kernel degenerates to an indicator of the barrier.
    """
    total = 0.0
    for firm in portfolio.firms:
        law = value_cond_law(
            firm, econ, scenario, var, t, a_circ, r=r, start_year=start_year
        )
        x = math.log(firm.b_ratio * firm.f0) - law.mean_log
        p = _tail_probability(np.array(x), law.std_log)
        total += firm.ead * firm.lgd * float(p)
    return total


def default_probability(
    firm: FirmSpec,
    econ: EconomyParams,
    scenario: TransitionScenario,
    var: VarParams,
    t: int,
    horizon: int,
    a_circ: Array,
    theta_t: Array,
    *,
    r: float,
    start_year: int | None = None,
) -> float:
    """P(V_{t+horizon} < barrier) given the systemic state at t, in closed form."""
    law = value_forward_law(
        firm, econ, scenario, var, t, horizon, a_circ, theta_t, r=r,
        start_year=start_year,
    )
    x = math.log(firm.b_ratio * firm.f0) - law.mean_log
    return float(_tail_probability(np.array(x), law.std_log))


def expected_loss(
    portfolio: Portfolio,
    econ: EconomyParams,
    scenario: TransitionScenario,
    var: VarParams,
    t: int,
    horizon: int,
    a_circ: Array,
    theta_t: Array,
    *,
    r: float,
    start_year: int | None = None,
) -> float:
    """Sum of EAD LGD PD over the portfolio for the given state and horizon."""
    return sum(
        firm.ead
        * firm.lgd
        * default_probability(
            firm, econ, scenario, var, t, horizon, a_circ, theta_t, r=r,
            start_year=start_year,
        )
        for firm in portfolio.firms
    )


def unexpected_loss_one_year(
    portfolio: Portfolio,
    econ: EconomyParams,
    scenario: TransitionScenario,
    var: VarParams,
    t: int,
    a_circ: Array,
    theta_t: Array,
    *,
    alpha: float,
    r: float,
    start_year: int | None = None,
) -> float:
    """Closed-form one-year unexpected loss at confidence alpha, given the state at t.

    Per firm: EAD LGD [Phi((S(1) z_alpha + log B - K) / (sigma_b sqrt(t+1))) - PD],
    where S(1) is the one-step systemic volatility of log value and K the
    forward conditional mean.  Firm contributions add because the one-step
    conditional losses are all driven by the same systemic innovation.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    z = float(norm.ppf(alpha))
    total = 0.0
    for firm in portfolio.firms:
        law = value_forward_law(
            firm, econ, scenario, var, t, 1, a_circ, theta_t, r=r,
            start_year=start_year,
        )
        s1 = systemic_vol(firm, var, 1)
        log_b = math.log(firm.b_ratio * firm.f0)
        scale = firm.sigma_b * math.sqrt(t + 1)
        stressed = float(_tail_probability(np.array(s1 * z + log_b - law.mean_log), scale))
        # hypot(scale, 0) == scale, so a zero systemic vol cancels exactly
        pd_val = float(_tail_probability(np.array(log_b - law.mean_log), math.hypot(scale, s1)))
        total += firm.ead * firm.lgd * (stressed - pd_val)
    return total


def tail_order_statistic(losses: Array, alpha: float) -> tuple[float, int]:
    """Upper order statistic ceil(alpha * M) of a loss sample (1-indexed rank).

    Warns when the rank lands on the sample maximum, where the empirical
    quantile is no longer informative, and proceeds with the maximum.
    """
    losses = np.asarray(losses, dtype=float)
    m = losses.shape[0]
    rank = math.ceil(alpha * m)
    if rank >= m:
        warnings.warn(
            f"alpha = {alpha} with {m} samples puts the quantile at the sample "
            "maximum; increase the sample size",
            QuantileUndefinedWarning,
            stacklevel=2,
        )
        rank = m
    value = float(np.partition(losses, rank - 1)[rank - 1])
    return value, rank


@dataclass(frozen=True, eq=False)
class RiskEstimates:
    """Monte Carlo risk measures per reporting year.

    PD arrays are (years, firms); loss arrays are per group (years, groups)
    plus portfolio totals (years,).  Expected shortfall averages the losses
    at or above the value-at-risk order statistic.
    """

    years: tuple[int, ...]
    horizon: int
    alpha: float
    n_paths: int
    seed: int
    group_labels: tuple[str, ...]
    pd: Array
    pd_stderr: Array
    el_group: Array
    el_group_stderr: Array
    el_total: Array
    el_stderr: Array
    ul_group: Array
    ul_group_stderr: Array
    ul_total: Array
    ul_stderr: Array
    es_group: Array
    es_group_stderr: Array
    es_total: Array
    es_stderr: Array

    @property
    def n_years(self) -> int:
        return len(self.years)


def _batch_stderr(values: Array) -> float:
    if values.shape[0] < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.shape[0]))


def _quantile_estimates(losses: Array, alpha: float) -> tuple[float, float, float, float]:
    """(UL, ES, UL stderr, ES stderr) from per-path predictive losses."""
    el = float(losses.mean())
    var_value, rank = tail_order_statistic(losses, alpha)
    ul = var_value - el
    srt = np.sort(losses)
    es = float(srt[rank - 1 :].mean())
    m = losses.shape[0]
    n_b = UL_STDERR_BATCHES if m >= 10 * UL_STDERR_BATCHES else max(2, m // 10)
    width = m // n_b
    ul_b = np.empty(n_b)
    es_b = np.empty(n_b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuantileUndefinedWarning)
        for i in range(n_b):
            chunk = losses[i * width : (i + 1) * width if i < n_b - 1 else m]
            v, rk = tail_order_statistic(chunk, alpha)
            ul_b[i] = v - chunk.mean()
            es_b[i] = np.sort(chunk)[rk - 1 :].mean()
    return ul, es, _batch_stderr(ul_b), _batch_stderr(es_b)


def mc_risk_estimates(
    portfolio: Portfolio,
    econ: EconomyParams,
    scenario: TransitionScenario,
    var: VarParams,
    config: RiskConfig,
    *,
    r: float,
    start_year: int | None = None,
    years: Sequence[int] | None = None,
    ensemble: PathEnsemble | None = None,
) -> RiskEstimates:
    """Path-averaged risk measures over a reporting window.

    One ensemble of systemic paths drives every year and every firm.  For
    each path the closed-form forward PD supplies the predictive loss; PD
    and EL are the path averages, UL is the upper alpha order statistic of
    the per-path losses minus EL, ES the tail mean beyond it.  UL and ES
    standard errors come from contiguous path batches.
    """
    start_year = scenario.t_circ if start_year is None else start_year
    if years is None:
        years = range(start_year, scenario.t_star + 1)
    years = tuple(int(y) for y in years)
    if any(y < start_year for y in years):
        raise ValueError("reporting years must not precede start_year")
    t_grid = [y - start_year for y in years]
    horizon = max(t_grid) + config.horizon
    if ensemble is None:
        ensemble = simulate_paths(
            var, horizon=horizon, n_paths=config.n_paths, seed=config.seed,
            workers=config.workers,
        )
    elif ensemble.horizon < horizon:
        raise ValueError("supplied ensemble is shorter than the reporting window")

    cache = _ShiftCache(econ, scenario)
    n = portfolio.n_firms
    t_cap = config.horizon
    ups = upsilon_sequence(var.gamma, t_cap)
    gam_ups = var.gamma @ ups[t_cap - 1]
    ups_sum = sum(ups)
    loads = portfolio.loadings
    sev = portfolio.severities
    log_b = portfolio.log_barriers

    # State-independent pieces of the forward mean, per firm and year.
    rho_firm = np.array([varrho(f, var, r) for f in portfolio.firms])
    av0 = np.array([cache.dot(f.a, start_year) for f in portfolio.firms])
    drift = loads @ ups_sum @ var.mu
    log_f0 = np.array([math.log(f.f0) for f in portfolio.firms])
    s_vol = np.array([systemic_vol(f, var, t_cap) for f in portfolio.firms])

    groups = portfolio.group_labels
    g_members = [portfolio.members(g) for g in groups]

    m = ensemble.n_paths
    ny = len(years)
    ng = len(groups)
    pd_hat = np.empty((ny, n))
    pd_se = np.empty((ny, n))
    el_g = np.empty((ny, ng))
    el_g_se = np.empty((ny, ng))
    el_tot = np.empty(ny)
    el_se = np.empty(ny)
    ul_g = np.empty((ny, ng))
    ul_g_se = np.empty((ny, ng))
    ul_tot = np.empty(ny)
    ul_se = np.empty(ny)
    es_g = np.empty((ny, ng))
    es_g_se = np.empty((ny, ng))
    es_tot = np.empty(ny)
    es_se = np.empty(ny)

    theta_proj = ensemble.theta @ gam_ups.T @ loads.T
    a_proj = ensemble.a_circ @ loads.T
    for k, (year, t) in enumerate(zip(years, t_grid)):
        log_r_fwd = np.array(
            [
                math.log(
                    _r_factor_from_cache(f, cache, rho_firm[i], t + t_cap, start_year)
                )
                for i, f in enumerate(portfolio.firms)
            ]
        )
        kappa = (
            a_proj[:, t, :]
            + theta_proj[:, t, :]
            + (log_f0 - av0 + log_r_fwd + drift)[None, :]
        )
        scale = np.sqrt(portfolio.sigma_b**2 * (t + t_cap) + s_vol**2)
        probs = norm.cdf((log_b[None, :] - kappa) / scale[None, :])
        pd_hat[k] = probs.mean(axis=0)
        pd_se[k] = probs.std(axis=0, ddof=1) / math.sqrt(m)
        firm_losses = probs * sev[None, :]
        total = firm_losses.sum(axis=1)
        el_tot[k] = total.mean()
        el_se[k] = total.std(ddof=1) / math.sqrt(m)
        ul_tot[k], es_tot[k], ul_se[k], es_se[k] = _quantile_estimates(
            total, config.alpha
        )
        for j, idx in enumerate(g_members):
            g_loss = firm_losses[:, idx].sum(axis=1)
            el_g[k, j] = g_loss.mean()
            el_g_se[k, j] = g_loss.std(ddof=1) / math.sqrt(m)
            ul_g[k, j], es_g[k, j], ul_g_se[k, j], es_g_se[k, j] = _quantile_estimates(
                g_loss, config.alpha
            )

    return RiskEstimates(
        years=years,
        horizon=config.horizon,
        alpha=config.alpha,
        n_paths=m,
        seed=config.seed,
        group_labels=groups,
        pd=pd_hat,
        pd_stderr=pd_se,
        el_group=el_g,
        el_group_stderr=el_g_se,
        el_total=el_tot,
        el_stderr=el_se,
        ul_group=ul_g,
        ul_group_stderr=ul_g_se,
        ul_total=ul_tot,
        ul_stderr=ul_se,
        es_group=es_g,
        es_group_stderr=es_g_se,
        es_total=es_tot,
        es_stderr=es_se,
    )


def bump_scenario(
    scenario: TransitionScenario, direction: Array | float, theta_fd: float
) -> TransitionScenario:
    """Scenario with the carbon price shifted by theta_fd * direction (euros).

    direction gives one bump per year of the window after the start,
    t_circ + 1 .. t_star; a scalar direction applies uniformly.  The start
    year's price stays put: it anchors the observed cash flows, so bumping
    it perturbs the conditioning data rather than the future path.  The
    result is an explicit-price scenario reproducing the bumped path
    exactly.
    """
    span = scenario.t_star - scenario.t_circ
    direction = np.asarray(direction, dtype=float)
    if direction.ndim == 0:
        direction = np.full(span, float(direction))
    if direction.shape != (span,):
        raise ValueError(
            f"direction must have one entry per post-start transition year "
            f"({span}), got shape {direction.shape}"
        )
    years = np.arange(scenario.t_circ, scenario.t_star + 1)
    base = carbon_price(scenario.schedule, years)
    bumped = base.copy()
    bumped[1:] += theta_fd * direction
    if np.any(bumped < 0):
        raise ValueError("bumped carbon price is negative; shrink the bump")
    schedule = CarbonPriceSchedule(
        delta0=scenario.schedule.delta0,
        t_circ=scenario.t_circ,
        t_star=scenario.t_star,
        prices=tuple((int(y), float(p)) for y, p in zip(years, bumped)),
    )
    return replace(scenario, schedule=schedule)


@dataclass(frozen=True, eq=False)
class SensitivityEstimates:
    """Finite-difference sensitivities of the risk measures to a price bump.

    Entries are (measure(bumped) - measure(base)) / theta_fd, euros of
    measure per euro of carbon-price move along the direction.
    """

    theta_fd: float
    direction: Array
    pd: Array
    el_total: Array
    el_group: Array
    ul_total: Array
    ul_group: Array
    es_total: Array
    es_group: Array


def loss_sensitivity(
    portfolio: Portfolio,
    econ: EconomyParams,
    scenario: TransitionScenario,
    var: VarParams,
    config: RiskConfig,
    direction: Array | float,
    *,
    r: float,
    start_year: int | None = None,
    years: Sequence[int] | None = None,
    base: RiskEstimates | None = None,
    ensemble: PathEnsemble | None = None,
) -> tuple[SensitivityEstimates, RiskEstimates]:
    """Forward finite-difference risk sensitivities under common random numbers.

    The same path ensemble prices the base and bumped scenarios, so a zero
    direction returns exactly zero.  Returns (sensitivities, base
    estimates).
    """
    start_year = scenario.t_circ if start_year is None else start_year
    if years is None:
        years = range(start_year, scenario.t_star + 1)
    years = tuple(int(y) for y in years)
    if ensemble is None:
        horizon = max(y - start_year for y in years) + config.horizon
        ensemble = simulate_paths(
            var, horizon=horizon, n_paths=config.n_paths, seed=config.seed,
            workers=config.workers,
        )
    if base is None:
        base = mc_risk_estimates(
            portfolio, econ, scenario, var, config, r=r, start_year=start_year,
            years=years, ensemble=ensemble,
        )
    shifted = bump_scenario(scenario, direction, config.theta_fd)
    bumped = mc_risk_estimates(
        portfolio, econ, shifted, var, config, r=r, start_year=start_year,
        years=years, ensemble=ensemble,
    )
    h = config.theta_fd
    span = scenario.t_star - scenario.t_circ
    dir_arr = np.asarray(direction, dtype=float)
    if dir_arr.ndim == 0:
        dir_arr = np.full(span, float(dir_arr))
    sens = SensitivityEstimates(
        theta_fd=h,
        direction=dir_arr,
        pd=(bumped.pd - base.pd) / h,
        el_total=(bumped.el_total - base.el_total) / h,
        el_group=(bumped.el_group - base.el_group) / h,
        ul_total=(bumped.ul_total - base.ul_total) / h,
        ul_group=(bumped.ul_group - base.ul_group) / h,
        es_total=(bumped.es_total - base.es_total) / h,
        es_group=(bumped.es_group - base.es_group) / h,
    )
    return sens, base
