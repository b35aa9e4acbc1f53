"""Closed-form multisector equilibrium under carbon costs.

With log utility, Cobb-Douglas production and constant returns, the
equilibrium consumption and output levels are explicit in the cumulative
productivity A and the emissions cost rates: carbon costs enter only through
the cost-adjusted share matrices and two deterministic log-level shifts
(v for consumption, frak_v for output).  Growth of both aggregates is
Gaussian with a cost-independent covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError, PriceDominance, SingularEquilibrium
from .productivity import StationaryMoments
from .transition import EmissionsCostRate

Array = NDArray[np.float64]

EQUILIBRIUM_COND_LIMIT = 1e10


def _readonly(a: Array) -> Array:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class EconomyParams:
    """Sectoral elasticities and preferences.

    psi[i] is the labor elasticity of sector i; lam[j, i] the elasticity of
    sector i's output to input j (row = input, column = sector); phi the
    inverse Frisch elasticity.  Preferences are log in consumption (the
    closed form exists only there).

    Constant returns psi_i + sum_j lam[j, i] = 1 is enforced by rescaling
    each column of lam unless renormalize=False, in which case raw values
    are kept and constant_returns reports whether the identity happens to
    hold.  Exact zero entries of lam are allowed (the Cobb-Douglas factor
    degenerates cleanly); positive entries below 1e-12 are rejected.
    """

    psi: Array
    lam: Array
    phi: float = 1.0
    renormalize: bool = True

    def __post_init__(self) -> None:
        psi = _readonly(np.atleast_1d(self.psi))
        lam = np.array(np.atleast_2d(self.lam), dtype=float)
        n = psi.shape[0]
        if lam.shape != (n, n):
            raise ValueError(f"lam must be {n}x{n}, got {lam.shape}")
        if psi.min() <= 0:
            raise ValueError("psi entries must be strictly positive")
        if self.phi < 0:
            raise ValueError("phi must be nonnegative")
        if lam.min() < 0:
            raise ValueError("lam entries must be nonnegative")
        tiny = (lam > 0) & (lam < 1e-12)
        if tiny.any():
            j, i = np.argwhere(tiny)[0]
            raise ValueError(f"lam[{j},{i}] = {lam[j, i]:.3e} is below the 1e-12 floor")
        if self.renormalize:
            col = lam.sum(axis=0)
            target = 1.0 - psi
            if np.any((col <= 0) & (target > 1e-9)):
                raise ValueError("cannot renormalize a zero lam column with psi < 1")
            scale = np.divide(target, col, out=np.ones(n), where=col > 0)
            lam = lam * scale
        returns = psi + lam.sum(axis=0)
        constant = bool(np.max(np.abs(returns - 1.0)) <= 1e-9)
        if self.renormalize and not constant:
            raise ValueError("constant returns violated after renormalization")
        if np.linalg.cond(np.eye(n) - lam) > EQUILIBRIUM_COND_LIMIT:
            raise SingularEquilibrium("I - lam is numerically singular")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "lam", _readonly(lam))
        object.__setattr__(self, "phi", float(self.phi))
        object.__setattr__(self, "_constant_returns", constant)

    @property
    def n_sectors(self) -> int:
        return self.psi.shape[0]

    @property
    def constant_returns(self) -> bool:
        return self._constant_returns

    @property
    def sigma_pref(self) -> float:
        """Intertemporal elasticity parameter, fixed at 1 (log utility)."""
        return 1.0


def psi_coeffs(econ: EconomyParams, d: EmissionsCostRate) -> Array:
    """Cost-adjusted labor shares Psi^i = psi^i (1 - tau_d^i) / (1 + kappa_d^i)."""
    if d.tau_d.max() >= 1.0:
        raise PriceDominance(f"tau*delta = {d.tau_d.max():.4g} >= 1")
    return econ.psi * (1.0 - d.tau_d) / (1.0 + d.kappa_d)


def lambda_coeffs(econ: EconomyParams, d: EmissionsCostRate) -> Array:
    """Cost-adjusted input shares.

    Lambda[j, i] = lam[j, i] * (1 - tau_d^i) / (1 + zeta_d^{ji})
                   * (1 + kappa_d^j) / (1 + kappa_d^i).
    """
    if d.tau_d.max() >= 1.0:
        raise PriceDominance(f"tau*delta = {d.tau_d.max():.4g} >= 1")
    kd = d.kappa_d
    return (
        econ.lam
        * (1.0 - d.tau_d)[None, :]
        / (1.0 + d.zeta_d)
        * (1.0 + kd)[:, None]
        / (1.0 + kd)[None, :]
    )


def output_consumption_ratio(lambda_d: Array) -> Array:
    """Sectoral output-to-consumption ratios e solving e^i = 1 + sum_j Lambda[i,j] e^j.

    Goods clearing divides out consumption: sector i's ratio collects one
    unit of final demand plus the ratio-weighted demands for i's goods as
    inputs.  Componentwise >= 1 whenever Lambda is nonnegative with
    spectral radius < 1 (Neumann series of euro flows).
    """
    lambda_d = np.atleast_2d(np.asarray(lambda_d, dtype=float))
    n = lambda_d.shape[0]
    radius = np.max(np.abs(np.linalg.eigvals(lambda_d)))
    lhs = np.eye(n) - lambda_d
    if radius >= 1.0 or np.linalg.cond(lhs) > EQUILIBRIUM_COND_LIMIT:
        raise SingularEquilibrium(
            f"I - Lambda not safely invertible (spectral radius {radius:.4g})"
        )
    return np.linalg.solve(lhs, np.ones(n))


def _sum_lam_log(lam: Array, coeffs: Array) -> Array:
    """sum_j lam[j, i] * log(coeffs[j, i]) with the 0 * log 0 = 0 convention."""
    safe = np.where(lam > 0, np.where(coeffs > 0, coeffs, 1.0), 1.0)
    return np.sum(np.where(lam > 0, lam * np.log(safe), 0.0), axis=0)


def consumption_cost_shift(econ: EconomyParams, d: EmissionsCostRate) -> Array:
    """Deterministic log-consumption shift v(d) per sector.

    v^i = log( e_i^{-phi psi^i / (1+phi)} Psi_i^{psi^i / (1+phi)}
               prod_j Lambda[j,i]^{lam[j,i]} ).
    """
    big_psi = psi_coeffs(econ, d)
    big_lam = lambda_coeffs(econ, d)
    e_ratio = output_consumption_ratio(big_lam)
    w = econ.psi / (1.0 + econ.phi)
    return -econ.phi * w * np.log(e_ratio) + w * np.log(big_psi) + _sum_lam_log(econ.lam, big_lam)


def output_cost_shift(econ: EconomyParams, d: EmissionsCostRate) -> Array:
    """Deterministic log-output shift frak_v(d) = v(d) + (I - lam^T) log e(d)."""
    big_lam = lambda_coeffs(econ, d)
    e_ratio = output_consumption_ratio(big_lam)
    return consumption_cost_shift(econ, d) + (np.eye(econ.n_sectors) - econ.lam.T) @ np.log(e_ratio)


@dataclass(frozen=True, eq=False)
class EquilibriumCoefficients:
    """All cost-adjusted equilibrium quantities at one cost-rate triple."""

    psi_d: Array
    lambda_d: Array
    e_ratio: Array
    v: Array
    frak_v: Array


def equilibrium_coefficients(econ: EconomyParams, d: EmissionsCostRate) -> EquilibriumCoefficients:
    """Evaluate (Psi, Lambda, e, v, frak_v) at one cost-rate triple."""
    big_psi = psi_coeffs(econ, d)
    big_lam = lambda_coeffs(econ, d)
    e_ratio = output_consumption_ratio(big_lam)
    w = econ.psi / (1.0 + econ.phi)
    v = -econ.phi * w * np.log(e_ratio) + w * np.log(big_psi) + _sum_lam_log(econ.lam, big_lam)
    frak_v = v + (np.eye(econ.n_sectors) - econ.lam.T) @ np.log(e_ratio)
    return EquilibriumCoefficients(
        psi_d=big_psi, lambda_d=big_lam, e_ratio=e_ratio, v=v, frak_v=frak_v
    )


def log_consumption(econ: EconomyParams, d: EmissionsCostRate, a_level: Array) -> Array:
    """Equilibrium log consumption: (I - lam^T)^{-1} (A + v(d)), A the log productivity level.

    The transpose reflects the storage convention: substituting inputs out
    of the production chain makes log C^i pick up lam[j, i] log C^j, i.e.
    row i of lam^T.
    """
    a_level = np.asarray(a_level, dtype=float)
    v = consumption_cost_shift(econ, d)
    return np.linalg.solve(np.eye(econ.n_sectors) - econ.lam.T, a_level + v)


def log_output(econ: EconomyParams, d: EmissionsCostRate, a_level: Array) -> Array:
    """Equilibrium log output: log C plus log of the output/consumption ratio."""
    big_lam = lambda_coeffs(econ, d)
    e_ratio = output_consumption_ratio(big_lam)
    return log_consumption(econ, d, a_level) + np.log(e_ratio)


def consumption_growth(
    econ: EconomyParams, theta: Array, d_t: EmissionsCostRate, d_prev: EmissionsCostRate
) -> Array:
    """Pathwise log-consumption growth (I - lam^T)^{-1} (theta + v(d_t) - v(d_prev))."""
    shift = consumption_cost_shift(econ, d_t) - consumption_cost_shift(econ, d_prev)
    theta = np.asarray(theta, dtype=float)
    lhs = np.eye(econ.n_sectors) - econ.lam.T
    return np.linalg.solve(lhs, (theta + shift).T).T


def output_growth(
    econ: EconomyParams, theta: Array, d_t: EmissionsCostRate, d_prev: EmissionsCostRate
) -> Array:
    """Pathwise log-output growth (I - lam^T)^{-1} (theta + frak_v(d_t) - frak_v(d_prev))."""
    shift = output_cost_shift(econ, d_t) - output_cost_shift(econ, d_prev)
    theta = np.asarray(theta, dtype=float)
    lhs = np.eye(econ.n_sectors) - econ.lam.T
    return np.linalg.solve(lhs, (theta + shift).T).T


@dataclass(frozen=True, eq=False)
class GrowthLaw:
    """Gaussian one-year growth law: means for consumption and output, shared covariance."""

    m_c: Array
    m_y: Array
    sigma_hat: Array


def growth_law(
    econ: EconomyParams,
    moments: StationaryMoments,
    epsilon: float,
    d_t: EmissionsCostRate,
    d_prev: EmissionsCostRate,
) -> GrowthLaw:
    """Growth-law moments at one date.

    m_C = (I-lam^T)^{-1} [mu_bar + v(d_t) - v(d_prev)], m_Y analogous with
    frak_v, and Sigma_hat = eps^2 (I-lam^T)^{-1} Sigma_bar (I-lam)^{-1}
    independent of the cost rates.
    """
    n = econ.n_sectors
    lhs = np.eye(n) - econ.lam.T
    inv = np.linalg.solve(lhs, np.eye(n))
    m_c = inv @ (
        moments.mu_bar + consumption_cost_shift(econ, d_t) - consumption_cost_shift(econ, d_prev)
    )
    m_y = inv @ (
        moments.mu_bar + output_cost_shift(econ, d_t) - output_cost_shift(econ, d_prev)
    )
    sigma_hat = epsilon**2 * inv @ moments.sigma_bar @ inv.T
    return GrowthLaw(m_c=m_c, m_y=m_y, sigma_hat=0.5 * (sigma_hat + sigma_hat.T))


@dataclass(frozen=True, eq=False)
class EquilibriumResidual:
    """Raw-system residuals for a candidate equilibrium, plus the implied N and Z."""

    goods: Array
    production: Array
    labor: Array
    intermediates: Array

    @property
    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.goods)), np.max(np.abs(self.production))))


def equilibrium_residual(
    econ: EconomyParams,
    d: EmissionsCostRate,
    a_level: Array,
    consumption: Array,
    output: Array,
) -> EquilibriumResidual:
    """Check a candidate (C, Y) against the raw market-clearing system.

    Reconstructs the optimal intermediates Z[j, i] = Lambda[j,i] (C^j/C^i) Y^i
    and labor N^i = (Psi^i Y^i / C^i)^{1/(1+phi)}, then returns relative
    residuals of goods clearing Y^i = C^i + sum_j Z[i, j] and of the
    production identity Y^i = e^{A^i} N_i^{psi_i} prod_j Z[j,i]^{lam[j,i]}.
    """
    consumption = np.asarray(consumption, dtype=float)
    output = np.asarray(output, dtype=float)
    a_level = np.asarray(a_level, dtype=float)
    if consumption.min() <= 0 or output.min() <= 0:
        raise DomainError("consumption and output must be strictly positive")
    big_psi = psi_coeffs(econ, d)
    big_lam = lambda_coeffs(econ, d)
    z = big_lam * (consumption[:, None] / consumption[None, :]) * output[None, :]
    n_labor = (big_psi * output / consumption) ** (1.0 / (1.0 + econ.phi))
    goods = (output - consumption - z.sum(axis=1)) / output
    log_prod = (
        a_level
        + econ.psi * np.log(n_labor)
        + _sum_lam_log(econ.lam, z)
    )
    production = (output - np.exp(log_prod)) / output
    return EquilibriumResidual(goods=goods, production=production, labor=n_labor, intermediates=z)
