"""Parameter estimation from historical sector, emissions, and default data.

Carbon intensities are emission-to-value ratios; their decay curves come
from an ordinary least-squares fit of log growth against time.  Production
elasticities are mean expenditure shares.  The productivity series is
recovered from observed sectoral growth through the input-output matrix and
fitted as a VAR(1).  Firm loadings are a no-intercept regression of pooled
cash-flow growth on sector growth.  The default barrier maximizes a
binomial mixture likelihood over a frozen ensemble of productivity paths.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp
from scipy.stats import binom, norm

from .errors import (
    BracketFailure,
    DegenerateFlatWarning,
    NonMonotoneWarning,
    NonStationaryWarning,
    RankDeficient,
    ZeroDenominator,
)
from .productivity import (
    VarParams,
    check_stationary,
    simulate_paths,
    stationary_moments,
)

Array = NDArray[np.float64]

REGRESSOR_COND_LIMIT = 1e10
FLAT_GROWTH_TOL = 1e-12
MLE_GRID_POINTS = 64


def _as_2d(name: str, a, n_years: int) -> Array:
    out = np.array(a, dtype=float)
    if out.ndim != 2 or out.shape[0] != n_years:
        raise ValueError(f"{name} must be (years, sectors), got {out.shape}")
    return out


@dataclass(frozen=True, eq=False)
class SectorPanel:
    """Observed annual sector accounts in euro.

    flows[t, j, i] is the euro value of sector j's goods bought by sector i
    in year t.  Zero flows mark absent linkages; the other series must be
    strictly positive.
    """

    years: tuple[int, ...]
    output_value: Array
    consumption_value: Array
    labor_hours: Array
    compensation: Array
    flows: Array

    def __post_init__(self) -> None:
        years = tuple(int(y) for y in self.years)
        object.__setattr__(self, "years", years)
        n = len(years)
        for name in ("output_value", "consumption_value", "labor_hours", "compensation"):
            arr = _as_2d(name, getattr(self, name), n)
            if np.any(arr <= 0):
                raise ValueError(f"{name} must be strictly positive")
            object.__setattr__(self, name, arr)
        flows = np.array(self.flows, dtype=float)
        i = self.output_value.shape[1]
        if flows.shape != (n, i, i):
            raise ValueError(f"flows must be (years, sectors, sectors), got {flows.shape}")
        if np.any(flows < 0):
            raise ValueError("flows must be nonnegative")
        object.__setattr__(self, "flows", flows)

    @property
    def n_years(self) -> int:
        return len(self.years)

    @property
    def n_sectors(self) -> int:
        return self.output_value.shape[1]


@dataclass(frozen=True, eq=False)
class EmissionsPanel:
    """Annual emissions in tons: direct by firms, by households, and per
    intermediary flow (flow_emissions[t, j, i] covers j's goods burned by i)."""

    years: tuple[int, ...]
    firm_emissions: Array
    household_emissions: Array
    flow_emissions: Array

    def __post_init__(self) -> None:
        years = tuple(int(y) for y in self.years)
        object.__setattr__(self, "years", years)
        n = len(years)
        firm = _as_2d("firm_emissions", self.firm_emissions, n)
        house = _as_2d("household_emissions", self.household_emissions, n)
        flow = np.array(self.flow_emissions, dtype=float)
        i = firm.shape[1]
        if flow.shape != (n, i, i):
            raise ValueError("flow_emissions must be (years, sectors, sectors)")
        for name, arr in (("firm_emissions", firm), ("household_emissions", house),
                          ("flow_emissions", flow)):
            if np.any(arr < 0):
                raise ValueError(f"{name} must be nonnegative")
        object.__setattr__(self, "firm_emissions", firm)
        object.__setattr__(self, "household_emissions", house)
        object.__setattr__(self, "flow_emissions", flow)


@dataclass(frozen=True, eq=False)
class DefaultHistory:
    """Rated and defaulted counts per year and rating group."""

    years: tuple[int, ...]
    groups: tuple[str, ...]
    rated: Array
    defaulted: Array

    def __post_init__(self) -> None:
        years = tuple(int(y) for y in self.years)
        groups = tuple(str(g) for g in self.groups)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "groups", groups)
        shape = (len(years), len(groups))
        rated = np.array(self.rated, dtype=int)
        defaulted = np.array(self.defaulted, dtype=int)
        if rated.shape != shape or defaulted.shape != shape:
            raise ValueError(f"rated and defaulted must have shape {shape}")
        if np.any(rated < 0) or np.any(defaulted < 0) or np.any(defaulted > rated):
            raise ValueError("counts must satisfy 0 <= defaulted <= rated")
        object.__setattr__(self, "rated", rated)
        object.__setattr__(self, "defaulted", defaulted)

    def column(self, group: str) -> tuple[Array, Array]:
        j = self.groups.index(group)
        return self.rated[:, j], self.defaulted[:, j]


@dataclass(frozen=True, eq=False)
class IntensitySeries:
    """Realized carbon intensities per year, ton per euro."""

    years: tuple[int, ...]
    tau: Array
    kappa: Array
    zeta: Array


def _ratio(
    numer: Array, denom: Array, what: str, years: Sequence[int]
) -> Array:
    """Elementwise emissions/value ratio; 0/0 counts as absent (zero intensity)."""
    bad = (denom <= 0) & (numer > 0)
    if np.any(bad):
        t = np.argwhere(bad)[0]
        raise ZeroDenominator(
            f"{what}: zero value with positive emissions at year "
            f"{years[int(t[0])]}, index {tuple(int(v) for v in t[1:])}"
        )
    out = np.zeros_like(numer)
    ok = denom > 0
    out[ok] = numer[ok] / denom[ok]
    return out


def intensity_from_flows(
    emissions: EmissionsPanel, panel: SectorPanel
) -> IntensitySeries:
    """Realized intensities: production tau = firm emissions / output value,
    household kappa = household emissions / consumption value, intermediary
    zeta = flow emissions / flow value."""
    if emissions.years != panel.years:
        raise ValueError("emissions and sector panels must cover the same years")
    tau = _ratio(emissions.firm_emissions, panel.output_value, "tau", panel.years)
    kappa = _ratio(
        emissions.household_emissions, panel.consumption_value, "kappa", panel.years
    )
    zeta = _ratio(emissions.flow_emissions, panel.flows, "zeta", panel.years)
    return IntensitySeries(years=panel.years, tau=tau, kappa=kappa, zeta=zeta)


@dataclass(frozen=True)
class IntensityFit:
    """Fitted intensity decay curve parameters with a quality flag.

    flag is None for a clean fit, "non_monotone" when the growth series
    changed sign (magnitude-based fallback fit), "degenerate_flat" when the
    series shows no movement at all.
    """

    y0: float
    g0: float
    theta: float
    flag: str | None = None


def fit_intensity_curve(values: Array) -> IntensityFit:
    """Least-squares fit of the saturating-decay curve to an intensity series.

    The curve's log growth decays geometrically, so the log absolute growth
    is linear in time: slope gives the decay speed, intercept the initial
    growth rate, and the level then follows from a one-parameter linear
    least squares in the fitted exponential factor.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.shape[0] < 4:
        raise ValueError("need a 1-d series of at least 4 observations")
    if np.any(values <= 0):
        raise ValueError("intensity values must be strictly positive")
    g = np.diff(np.log(values))
    if np.all(np.abs(g) < FLAT_GROWTH_TOL):
        warnings.warn(
            "flat intensity series; returning zero growth", DegenerateFlatWarning,
            stacklevel=2,
        )
        return IntensityFit(y0=float(values.mean()), g0=0.0, theta=1.0,
                            flag="degenerate_flat")
    flag = None
    signs = np.sign(g[np.abs(g) >= FLAT_GROWTH_TOL])
    if signs.max() != signs.min():
        warnings.warn(
            "intensity growth changes sign; fitting magnitudes",
            NonMonotoneWarning,
            stacklevel=2,
        )
        flag = "non_monotone"
    keep = np.abs(g) >= FLAT_GROWTH_TOL
    if int(keep.sum()) < 2:
        warnings.warn(
            "fewer than two usable growth observations; returning zero growth",
            DegenerateFlatWarning,
            stacklevel=2,
        )
        return IntensityFit(y0=float(values.mean()), g0=0.0, theta=1.0,
                            flag="degenerate_flat")
    s = np.arange(1, values.shape[0])[keep].astype(float)
    logg = np.log(np.abs(g[keep]))
    slope, intercept = np.polyfit(s, logg, 1)
    theta_hat = -float(slope)
    if abs(theta_hat) < 1e-12:
        factor = 1.0
    else:
        factor = theta_hat / math.expm1(theta_hat)
    g0_mag = math.exp(float(intercept)) * factor
    g0_hat = math.copysign(g0_mag, float(g.mean()))
    t_grid = np.arange(values.shape[0], dtype=float)
    if abs(theta_hat) < 1e-12:
        fitted = np.exp(g0_hat * t_grid)
    else:
        fitted = np.exp(g0_hat * (1.0 - np.exp(-theta_hat * t_grid)) / theta_hat)
    y0_hat = float(values @ fitted / (fitted @ fitted))
    return IntensityFit(y0=y0_hat, g0=g0_hat, theta=theta_hat, flag=flag)


@dataclass(frozen=True, eq=False)
class ElasticityFit:
    """Mean expenditure shares and their labor + intermediate coverage of output."""

    psi: Array
    lam: Array
    coverage: Array


def estimate_elasticities(panel: SectorPanel) -> ElasticityFit:
    """Average expenditure shares over the panel years.

    lam[j, i] is the mean share of sector i's output value paid to sector j
    for intermediates, psi[i] the mean compensation share, and coverage[i]
    their sum (the fraction of output the production factors account for).
    """
    out_val = panel.output_value
    psi = (panel.compensation / out_val).mean(axis=0)
    lam = (panel.flows / out_val[:, None, :]).mean(axis=0)
    coverage = psi + lam.sum(axis=0)
    return ElasticityFit(psi=psi, lam=lam, coverage=coverage)


def estimate_var(delta_y: Array, lam_hat: Array) -> VarParams:
    """VAR(1) fit of the productivity series implied by sectoral output growth.

    Pre-transition the productivity innovations are (I - lam^T) times output
    growth.  Each equation is fitted by OLS with an intercept; the residual
    covariance uses the n-1 denominator; the innovation scale is folded
    into the covariance (epsilon = 1).  A nonstationary fit is returned
    as-is with a NonStationaryWarning.
    """
    delta_y = np.asarray(delta_y, dtype=float)
    lam_hat = np.asarray(lam_hat, dtype=float)
    n_sec = lam_hat.shape[0]
    if delta_y.ndim != 2 or delta_y.shape[1] != n_sec:
        raise ValueError("delta_y must be (years, sectors) matching lam_hat")
    if delta_y.shape[0] < n_sec + 2:
        raise ValueError("need at least sectors + 2 growth observations")
    theta = delta_y @ (np.eye(n_sec) - lam_hat)
    y = theta[1:]
    x = np.column_stack([np.ones(theta.shape[0] - 1), theta[:-1]])
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    mu_hat = coef[0]
    gamma_hat = coef[1:].T
    resid = y - x @ coef
    n_obs = y.shape[0]
    sigma_hat = resid.T @ resid / (n_obs - 1)
    sigma_hat = 0.5 * (sigma_hat + sigma_hat.T)
    _, stationary = check_stationary(gamma_hat)
    if not stationary:
        warnings.warn(
            "fitted VAR is not stationary; downstream moment solves will fail",
            NonStationaryWarning,
            stacklevel=2,
        )
    return VarParams(mu=mu_hat, gamma=gamma_hat, sigma=sigma_hat, epsilon=1.0)


@dataclass(frozen=True, eq=False)
class LoadingFit:
    """Factor loadings and idiosyncratic volatility for one firm group."""

    a: Array
    sigma_b: float


def fit_factor_loadings(
    growth_panel: Mapping[str, Array], delta: Array
) -> dict[str, LoadingFit]:
    """Per-group regression of pooled firm cash-flow growth on sector growth.

    Summing the k member growth rates multiplies the common loading by k
    and the idiosyncratic variance by k, so the group sum is regressed on
    k * delta without intercept and the residual variance is divided by k.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.ndim != 2:
        raise ValueError("delta must be (years, sectors)")
    n_years, n_sec = delta.shape
    if n_years < n_sec + 2:
        raise ValueError("need at least sectors + 2 time observations")
    if np.linalg.cond(delta) > REGRESSOR_COND_LIMIT:
        raise RankDeficient("sector growth regressors are collinear")
    out: dict[str, LoadingFit] = {}
    for label, panel in growth_panel.items():
        panel = np.asarray(panel, dtype=float)
        if panel.ndim == 1:
            panel = panel[:, None]
        if panel.shape[0] != n_years:
            raise ValueError(f"group {label!r} growth panel years mismatch")
        k = panel.shape[1]
        y = panel.sum(axis=1)
        x = k * delta
        coef, *_ = np.linalg.lstsq(x, y, rcond=None)
        resid = y - x @ coef
        dof = n_years - n_sec
        sigma2 = float(resid @ resid) / (dof * k)
        out[label] = LoadingFit(a=coef, sigma_b=math.sqrt(sigma2))
    return out


def loadings_to_theta_space(
    fits: Mapping[str, LoadingFit], lam_hat: Array
) -> dict[str, LoadingFit]:
    """Convert loadings on observed sector growth into productivity-factor space.

    Observed growth is the input-output propagation of the productivity
    innovations, so a loading a_tilde on growth equals (I - lam)^-1 a_tilde
    on the innovations themselves.  Barrier fitting and valuation work in
    the latter space.
    """
    lam_hat = np.asarray(lam_hat, dtype=float)
    lhs = np.eye(lam_hat.shape[0]) - lam_hat
    return {
        label: LoadingFit(a=np.linalg.solve(lhs, fit.a), sigma_b=fit.sigma_b)
        for label, fit in fits.items()
    }


@dataclass(frozen=True)
class BarrierFit:
    """Maximum-likelihood default barrier (relative to initial cash flow).

    flag is None for an interior optimum, "no_defaults" or "all_defaults"
    for boundary returns where the likelihood is one-sided.
    """

    b_ratio: float
    log_likelihood: float
    flag: str | None = None


def _barrier_loglik(
    log_b: float, kernel: Array, scales: Array, rated: Array, defaulted: Array
) -> float:
    """Mixture log likelihood at one barrier level.

    kernel is (paths, years): per path the one-year-ahead conditional mean
    of log value relative to initial cash flow, at zero carbon price.
    """
    p = norm.cdf((log_b - kernel) / scales[None, :])
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    log_terms = binom.logpmf(defaulted[None, :], rated[None, :], p)
    per_year = logsumexp(log_terms, axis=0) - math.log(kernel.shape[0])
    return float(per_year.sum())


def fit_barrier_mle(
    history: DefaultHistory,
    group_params: Mapping[str, LoadingFit],
    var: VarParams,
    econ=None,
    *,
    r: float,
    n_paths: int = 2000,
    seed: int = 0,
    b_lo: float | None = None,
    b_hi: float | None = None,
    workers: int = 1,
) -> dict[str, BarrierFit]:
    """Default barrier per rating group by maximum likelihood.

    Conditional on a simulated productivity path, yearly default counts are
    binomial with the one-year-ahead default probability at zero carbon
    price; the likelihood mixes over a frozen path ensemble (common seed
    across every barrier evaluation, so the objective is smooth in the
    barrier).  A 64-point grid over log barrier brackets the optimum and
    golden-section search refines it.

    group_params must carry productivity-space loadings (convert regression
    fits with loadings_to_theta_space first).  The zero-price kernel does
    not involve the cost shifts (they cancel between the value
    normalization and the discounted multiplier), so the economy argument
    is accepted for interface completeness and unused.
    """
    del econ
    if not any(np.any(history.rated[:, j] > 0) for j in range(len(history.groups))):
        raise ValueError("default history has no rated firms")
    n_years = len(history.years)
    ens = simulate_paths(
        var, horizon=max(n_years - 1, 1), n_paths=n_paths, seed=seed, workers=workers
    )
    moments = stationary_moments(var)
    results: dict[str, BarrierFit] = {}
    t_grid = np.arange(n_years)
    for label in history.groups:
        if label not in group_params:
            raise KeyError(f"no loading parameters for group {label!r}")
        params = group_params[label]
        a = np.asarray(params.a, dtype=float)
        sig = params.sigma_b
        rho_n = 0.5 * sig**2 + float(a @ moments.mu_bar) - r
        if rho_n >= 0:
            raise ValueError(
                f"group {label!r}: discounted value series diverges (varrho >= 0)"
            )
        asa = float(a @ var.sigma @ a) * var.epsilon**2
        scales = np.sqrt(sig**2 * (t_grid + 1) + asa)
        drift = ens.theta[:, : n_years, :] @ var.gamma.T @ a + float(a @ var.mu)
        kernel = (
            ens.a_circ[:, : n_years, :] @ a + drift - math.log(-math.expm1(rho_n))
        )
        rated, defaulted = history.column(label)
        lo = math.log(b_lo) if b_lo is not None else float(kernel.mean() - 8.0 * scales.max())
        hi = math.log(b_hi) if b_hi is not None else float(kernel.mean() + 8.0 * scales.max())
        if np.all(defaulted == 0):
            results[label] = BarrierFit(
                b_ratio=math.exp(lo),
                log_likelihood=_barrier_loglik(lo, kernel, scales, rated, defaulted),
                flag="no_defaults",
            )
            continue
        if np.all(defaulted == rated):
            results[label] = BarrierFit(
                b_ratio=math.exp(hi),
                log_likelihood=_barrier_loglik(hi, kernel, scales, rated, defaulted),
                flag="all_defaults",
            )
            continue
        grid = np.linspace(lo, hi, MLE_GRID_POINTS)
        values = np.array(
            [_barrier_loglik(g, kernel, scales, rated, defaulted) for g in grid]
        )
        if not np.all(np.isfinite(values)):
            raise BracketFailure(f"group {label!r}: non-finite likelihood on the grid")
        if float(values.max() - values.min()) < 1e-10 * (abs(float(values.max())) + 1.0):
            raise BracketFailure(f"group {label!r}: likelihood is flat over the bracket")
        best = int(np.argmax(values))
        if best == 0 or best == MLE_GRID_POINTS - 1:
            raise BracketFailure(
                f"group {label!r}: no interior likelihood maximum in "
                f"[{math.exp(lo):.4g}, {math.exp(hi):.4g}]"
            )
        res = minimize_scalar(
            lambda lb: -_barrier_loglik(lb, kernel, scales, rated, defaulted),
            bracket=(grid[best - 1], grid[best], grid[best + 1]),
            method="golden",
            options={"xtol": 1e-7},
        )
        results[label] = BarrierFit(
            b_ratio=float(math.exp(res.x)), log_likelihood=float(-res.fun), flag=None
        )
    return results
