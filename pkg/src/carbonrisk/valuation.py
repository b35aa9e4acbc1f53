"""Firm cash flows and the closed-form discounted-cash-flow value proxy.

A firm's log cash-flow growth loads linearly on the sector productivity
factors plus idiosyncratic Gaussian noise.  Freezing the systemic noise at
its mean yields a log-Gaussian value proxy F0 * R_t * exp(a (A_circ_t -
frak_v(d_0))) * exp(W_t), where the deterministic multiplier R_t sums the
discounted cost-shift terms with three regimes: constant price before the
transition, explicit sum across it, geometric tail after it.

Model time t counts years since start_year (A_circ = 0, W = 0 at t = 0);
cost rates at model time t are read at absolute year start_year + t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .economy import EconomyParams, output_cost_shift
from .errors import NotSummable
from .productivity import (
    ProductivityState,
    VarParams,
    simulate_paths,
    stationary_moments,
    upsilon_sequence,
)
from .transition import TransitionScenario, emissions_cost_rate

Array = NDArray[np.float64]

ORACLE_TRUNCATION_CAP = 5000


@dataclass(frozen=True, eq=False)
class FirmSpec:
    """Static description of one obligor.

    a is the loading of log cash-flow growth on the productivity factors
    (theta-space); sigma_b the idiosyncratic volatility per square-root
    year; f0 the initial cash flow; b_ratio the default barrier divided by
    f0; ead and lgd the exposure and loss-given-default used at every
    horizon date.
    """

    id: str
    group: str
    a: Array
    sigma_b: float
    f0: float
    b_ratio: float
    ead: float
    lgd: float

    def __post_init__(self) -> None:
        a = np.array(np.atleast_1d(self.a), dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        if self.sigma_b <= 0:
            raise ValueError("sigma_b must be positive")
        if self.f0 <= 0:
            raise ValueError("f0 must be positive")
        if self.b_ratio <= 0:
            raise ValueError("b_ratio must be positive")
        if self.ead <= 0:
            raise ValueError("ead must be positive")
        if not 0.0 < self.lgd <= 1.0:
            raise ValueError("lgd must lie in (0, 1]")

    @property
    def log_barrier(self) -> float:
        """log of the barrier-to-initial-cash-flow ratio."""
        return math.log(self.b_ratio)


@dataclass(frozen=True, eq=False)
class WellPosednessReport:
    """Summability and non-explosion diagnostics for a set of firms at rate r."""

    varrho: Array
    rho: float | None
    r: float
    gamma_operator_norm: float
    gamma_spectral_radius: float
    norm_gap: bool
    varrho_pass: bool
    rho_pass: bool

    @property
    def passed(self) -> bool:
        return self.varrho_pass and self.rho_pass


@dataclass(frozen=True)
class ValueLaw:
    """Conditional Gaussian law of log firm value."""

    mean_log: float
    var_log: float

    @property
    def std_log(self) -> float:
        return math.sqrt(self.var_log)


def varrho(firm: FirmSpec, var: VarParams, r: float) -> float:
    """Per-firm growth-minus-discount exponent: sigma_b^2/2 + a mu_bar - r.

    Negative values make the value-proxy series summable.
    """
    mu_bar = stationary_moments(var).mu_bar
    return 0.5 * firm.sigma_b**2 + float(firm.a @ mu_bar) - r


def check_well_posed(
    firms: Sequence[FirmSpec], var: VarParams, r: float
) -> WellPosednessReport:
    """Evaluate both well-posedness inequalities for every firm.

    varrho_n < 0 makes the proxy multiplier summable; the stronger bound
    rho < r controls the exact discounted value.  The rho bound needs the
    operator norm of gamma below 1, which is stronger than the stationarity
    assumption; when only the spectral radius is below 1 the bound is not
    computable and norm_gap is set.
    """
    mu_bar = stationary_moments(var).mu_bar
    op_norm = float(np.linalg.norm(var.gamma, 2))
    spectral = float(np.max(np.abs(np.linalg.eigvals(var.gamma))))
    sigma_top = float(np.max(np.linalg.eigvalsh(var.sigma)))
    rhos = np.array([0.5 * f.sigma_b**2 + float(f.a @ mu_bar) - r for f in firms])
    if op_norm < 1.0:
        bounds = [
            float(f.a @ mu_bar)
            + 0.5 * f.sigma_b**2
            + 0.5 * var.epsilon**2 * float(f.a @ f.a) * sigma_top / (1.0 - op_norm) ** 2
            for f in firms
        ]
        rho = max(bounds)
        rho_pass = rho < r
    else:
        rho = None
        rho_pass = False
    return WellPosednessReport(
        varrho=rhos,
        rho=rho,
        r=r,
        gamma_operator_norm=op_norm,
        gamma_spectral_radius=spectral,
        norm_gap=op_norm >= 1.0 > spectral,
        varrho_pass=bool(np.all(rhos < 0.0)),
        rho_pass=rho_pass,
    )


class _ShiftCache:
    """Lazy a . frak_v(d_year) evaluations for one (econ, scenario) pair."""

    def __init__(self, econ: EconomyParams, scenario: TransitionScenario):
        self.econ = econ
        self.scenario = scenario
        self._values: dict[int, Array] = {}

    def frak_v(self, year: int) -> Array:
        year = int(min(year, self.scenario.t_star))
        if year not in self._values:
            d = emissions_cost_rate(self.scenario, year)
            self._values[year] = output_cost_shift(self.econ, d)
        return self._values[year]

    def dot(self, a: Array, year: int) -> float:
        return float(a @ self.frak_v(year))


def output_shift_by_year(
    econ: EconomyParams, scenario: TransitionScenario, years: Sequence[int]
) -> dict[int, Array]:
    """frak_v(d_year) for each requested absolute year (frozen beyond t_star)."""
    cache = _ShiftCache(econ, scenario)
    return {int(y): cache.frak_v(int(y)) for y in years}


def _r_factor_from_cache(
    firm: FirmSpec,
    cache: _ShiftCache,
    rho_n: float,
    t: int,
    start_year: int,
) -> float:
    scenario = cache.scenario
    if rho_n >= 0.0:
        raise NotSummable(
            f"varrho = {rho_n:.4g} >= 0 for firm {firm.id}; value series diverges"
        )
    q = math.exp(rho_n)
    t_circ_m = scenario.t_circ - start_year
    t_star_m = scenario.t_star - start_year
    av_star = cache.dot(firm.a, scenario.t_star)
    tail_exponent = t_star_m - t + 1
    if t >= t_star_m:
        return math.exp(av_star) / (1.0 - q)
    if t >= t_circ_m:
        s_values = np.arange(0, t_star_m - t + 1)
        head = sum(
            q**s * math.exp(cache.dot(firm.a, start_year + t + int(s))) for s in s_values
        )
        return head + math.exp(av_star) * q**tail_exponent / (1.0 - q)
    av_circ = cache.dot(firm.a, scenario.t_circ)
    k_head = t_circ_m - t
    head = math.exp(av_circ) * (1.0 - q ** (k_head + 1)) / (1.0 - q)
    mid = sum(
        q**s * math.exp(cache.dot(firm.a, start_year + t + s))
        for s in range(k_head + 1, t_star_m - t + 1)
    )
    return head + mid + math.exp(av_star) * q**tail_exponent / (1.0 - q)


def r_factor(
    firm: FirmSpec,
    econ: EconomyParams,
    scenario: TransitionScenario,
    var: VarParams,
    t: int,
    *,
    r: float,
    start_year: int | None = None,
) -> float:
    """Deterministic value multiplier R_t at model time t.

    Sum over future dates s >= 0 of exp(varrho * s + a frak_v(d_{t+s})):
    geometric tail once the scenario is frozen, explicit sum across the
    transition window, constant-price head before it (cost rates held at
    their transition-start value, matching the closed form).
    """
    start_year = scenario.t_circ if start_year is None else start_year
    cache = _ShiftCache(econ, scenario)
    return _r_factor_from_cache(firm, cache, varrho(firm, var, r), t, start_year)


def firm_value_proxy(
    firm: FirmSpec,
    econ: EconomyParams,
    scenario: TransitionScenario,
    var: VarParams,
    state: ProductivityState,
    w_t: float,
    *,
    r: float,
    start_year: int | None = None,
) -> float:
    """Value proxy F0 R_t exp(a (A_circ_t - frak_v(d_0))) exp(W_t); always positive."""
    start_year = scenario.t_circ if start_year is None else start_year
    cache = _ShiftCache(econ, scenario)
    rt = _r_factor_from_cache(firm, cache, varrho(firm, var, r), state.t, start_year)
    av0 = cache.dot(firm.a, start_year)
    return firm.f0 * rt * math.exp(float(firm.a @ state.a_circ) - av0 + w_t)


def value_cond_law(
    firm: FirmSpec,
    econ: EconomyParams,
    scenario: TransitionScenario,
    var: VarParams,
    t: int,
    a_circ: Array,
    *,
    r: float,
    start_year: int | None = None,
) -> ValueLaw:
    """Law of log value at t given the systemic path: N(log F0 + m, t sigma_b^2)."""
    start_year = scenario.t_circ if start_year is None else start_year
    cache = _ShiftCache(econ, scenario)
    rt = _r_factor_from_cache(firm, cache, varrho(firm, var, r), t, start_year)
    av0 = cache.dot(firm.a, start_year)
    m = float(firm.a @ np.asarray(a_circ, dtype=float)) - av0 + math.log(rt)
    return ValueLaw(mean_log=math.log(firm.f0) + m, var_log=t * firm.sigma_b**2)


def systemic_vol(firm: FirmSpec, var: VarParams, T: int) -> float:
    """Systemic log-value volatility over T years:
    epsilon * sqrt(sum_{u=1..T} (a Upsilon_{T-u}) Sigma (a Upsilon_{T-u})^T)."""
    ups = upsilon_sequence(var.gamma, T)
    total = 0.0
    for u in ups:
        au = firm.a @ u
        total += float(au @ var.sigma @ au)
    return var.epsilon * math.sqrt(total)


def value_forward_law(
    firm: FirmSpec,
    econ: EconomyParams,
    scenario: TransitionScenario,
    var: VarParams,
    t: int,
    T: int,
    a_circ: Array,
    theta_t: Array,
    *,
    r: float,
    start_year: int | None = None,
) -> ValueLaw:
    """Law of log value at t+T given the systemic path up to t.

    mean = log F0 + a (A_circ_t - frak_v(d_0)) + log R_{t+T}
           + a Gamma Upsilon_{T-1} theta_t + a (sum_{u=1..T} Upsilon_{u-1}) mu;
    var  = sigma_b^2 (t+T) + systemic_vol(T)^2.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    start_year = scenario.t_circ if start_year is None else start_year
    cache = _ShiftCache(econ, scenario)
    rho_n = varrho(firm, var, r)
    r_fwd = _r_factor_from_cache(firm, cache, rho_n, t + T, start_year)
    av0 = cache.dot(firm.a, start_year)
    ups = upsilon_sequence(var.gamma, T)
    mean = (
        float(firm.a @ np.asarray(a_circ, dtype=float))
        - av0
        + math.log(r_fwd)
        + float(firm.a @ var.gamma @ ups[T - 1] @ np.asarray(theta_t, dtype=float))
        + float(firm.a @ sum(ups) @ var.mu)
    )
    variance = firm.sigma_b**2 * (t + T) + systemic_vol(firm, var, T) ** 2
    return ValueLaw(mean_log=math.log(firm.f0) + mean, var_log=variance)


def proxy_value_ratio(
    firm: FirmSpec,
    econ: EconomyParams,
    scenario: TransitionScenario,
    var: VarParams,
    t: int,
    *,
    r: float,
    start_year: int | None = None,
) -> float:
    """Proxy value divided by current cash flow: R_t exp(-a frak_v(d_t))."""
    start_year = scenario.t_circ if start_year is None else start_year
    cache = _ShiftCache(econ, scenario)
    rt = _r_factor_from_cache(firm, cache, varrho(firm, var, r), t, start_year)
    return rt * math.exp(-cache.dot(firm.a, start_year + t))


def truncation_horizon(rate: float, tol: float = 1e-12) -> int:
    """Smallest K with exp(rate * K) < tol, capped at the oracle limit."""
    if rate >= 0.0:
        raise NotSummable(f"nonnegative decay rate {rate:.4g}")
    return min(ORACLE_TRUNCATION_CAP, math.ceil(math.log(tol) / rate))


def firm_value_mc_oracle(
    firm: FirmSpec,
    econ: EconomyParams,
    scenario: TransitionScenario,
    var: VarParams,
    state: ProductivityState,
    *,
    r: float,
    n_paths: int,
    seed: int,
    k_trunc: int | None = None,
    start_year: int | None = None,
    workers: int = 1,
) -> tuple[float, float]:
    """Brute-force truncated discounted-cash-flow estimate of V_t / F_t.

    Simulates systemic continuations of the exact cash-flow recursion and
    integrates the idiosyncratic noise analytically (its exponential moment
    is exp(sigma_b^2 s / 2)), so the only Monte Carlo error is systemic.
    Returns (estimate, standard error).
    """
    start_year = scenario.t_circ if start_year is None else start_year
    moments = stationary_moments(var)
    rho_n = 0.5 * firm.sigma_b**2 + float(firm.a @ moments.mu_bar) - r
    report = check_well_posed([firm], var, r)
    if report.rho is not None and report.rho >= r:
        raise NotSummable(f"rho = {report.rho:.4g} >= r = {r:.4g}")
    decay = rho_n if report.rho is None else max(rho_n, report.rho - r)
    k = truncation_horizon(decay) if k_trunc is None else k_trunc
    ens = simulate_paths(var, horizon=k, n_paths=n_paths, seed=seed,
                         theta0=state.theta, workers=workers)
    cache = _ShiftCache(econ, scenario)
    year0 = start_year + state.t
    av_t = cache.dot(firm.a, year0)
    s_grid = np.arange(k + 1)
    av_diff = np.array([cache.dot(firm.a, year0 + int(s)) for s in s_grid]) - av_t
    drift = (0.5 * firm.sigma_b**2 - r) * s_grid
    exponents = ens.a_circ @ firm.a + av_diff[None, :] + drift[None, :]
    totals = np.exp(exponents).sum(axis=1)
    estimate = float(totals.mean())
    stderr = float(totals.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return estimate, stderr
