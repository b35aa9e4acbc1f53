"""Carbon-price schedules, intensity decay curves, and emissions cost rates.

A transition scenario combines a deterministic carbon price path (euro/ton)
with decaying carbon-intensity curves (ton/euro) for production (tau),
intermediary inputs (zeta, input j into sector i) and household consumption
(kappa).  Their product is the dimensionless emissions-cost-rate triple that
drives the whole economy.

Two time conventions meet here: price schedules are functions of the absolute
calendar year, while intensity curves run on curve time s = year - t_ref
(t_ref defaults to the transition start).  TransitionScenario mediates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import PriceDominance

Array = NDArray[np.float64]


@dataclass(frozen=True)
class CarbonPriceSchedule:
    """Piecewise carbon price: constant delta0 before t_circ, evolving on
    [t_circ, t_star], frozen at the t_star value afterwards.

    Either geometric (rate eta per year) or an explicit per-year price map
    covering every year of [t_circ, t_star]; an explicit map takes precedence
    when both are present.
    """

    delta0: float
    t_circ: int
    t_star: int
    eta: float | None = None
    prices: tuple[tuple[int, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.delta0 < 0:
            raise ValueError("delta0 must be nonnegative")
        if self.t_star <= self.t_circ:
            raise ValueError("t_star must be after t_circ")
        if self.prices is None and self.eta is None:
            raise ValueError("either eta or an explicit price list is required")
        if self.eta is not None and self.eta < -1:
            raise ValueError("eta must be >= -1")
        if self.prices is not None:
            listed = dict(self.prices)
            missing = [y for y in range(self.t_circ, self.t_star + 1) if y not in listed]
            if missing:
                raise ValueError(f"explicit prices missing years {missing}")
            if any(v < 0 for v in listed.values()):
                raise ValueError("explicit prices must be nonnegative")
            object.__setattr__(self, "prices", tuple(sorted(listed.items())))


def carbon_price(schedule: CarbonPriceSchedule, t):
    """Price in euro/ton at absolute year t (scalar or array)."""
    t = np.asarray(t)
    if schedule.prices is not None:
        years = np.array([y for y, _ in schedule.prices])
        values = np.array([v for _, v in schedule.prices])
        clamped = np.clip(t, schedule.t_circ, schedule.t_star)
        idx = np.searchsorted(years, clamped)
        out = np.where(t < schedule.t_circ, schedule.delta0, values[idx])
    else:
        exponent = np.clip(t, schedule.t_circ, schedule.t_star) - schedule.t_circ
        out = schedule.delta0 * (1.0 + schedule.eta) ** exponent
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class IntensityCurve:
    """Decaying intensity y(s) = y0 * exp(g0 * (1 - exp(-theta s)) / theta) on
    curve time s >= 0, frozen at its t_star value afterwards.

    g0 < 0 gives decay; the sign is free because calibrated decarbonization
    rates are negative in this parametrization.
    """

    y0: float
    g0: float
    theta: float
    t_star: int

    def __post_init__(self) -> None:
        if self.y0 <= 0:
            raise ValueError("y0 must be positive")
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.t_star < 0:
            raise ValueError("t_star must be >= 0 in curve time")


def intensity(curve: IntensityCurve, s):
    """Intensity in ton/euro at curve time s (scalar or array), clamped to [0, t_star]."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, float(curve.t_star))
    out = curve.y0 * np.exp(curve.g0 * (1.0 - np.exp(-curve.theta * s)) / curve.theta)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class IntensitySet:
    """The three intensity families: tau[i], zeta[j][i], kappa[i]."""

    tau: tuple[IntensityCurve, ...]
    zeta: tuple[tuple[IntensityCurve, ...], ...]
    kappa: tuple[IntensityCurve, ...]

    def __post_init__(self) -> None:
        n = len(self.tau)
        if len(self.kappa) != n or len(self.zeta) != n or any(len(row) != n for row in self.zeta):
            raise ValueError("tau, zeta, kappa must share one sector dimension")

    @property
    def n_sectors(self) -> int:
        return len(self.tau)


@dataclass(frozen=True, eq=False)
class EmissionsCostRate:
    """Dimensionless cost-rate triple (tau*delta, zeta*delta, kappa*delta) at one date."""

    tau_d: Array
    zeta_d: Array
    kappa_d: Array

    def __post_init__(self) -> None:
        tau_d = np.atleast_1d(np.asarray(self.tau_d, dtype=float))
        zeta_d = np.atleast_2d(np.asarray(self.zeta_d, dtype=float))
        kappa_d = np.atleast_1d(np.asarray(self.kappa_d, dtype=float))
        n = tau_d.shape[0]
        if zeta_d.shape != (n, n) or kappa_d.shape != (n,):
            raise ValueError("cost-rate components must share one sector dimension")
        if tau_d.min() < 0 or zeta_d.min() < 0 or kappa_d.min() < 0:
            raise ValueError("cost rates must be nonnegative")
        for name, arr in (("tau_d", tau_d), ("zeta_d", zeta_d), ("kappa_d", kappa_d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def zero(cls, n_sectors: int) -> "EmissionsCostRate":
        return cls(np.zeros(n_sectors), np.zeros((n_sectors, n_sectors)), np.zeros(n_sectors))

    @property
    def n_sectors(self) -> int:
        return self.tau_d.shape[0]

    def allclose(self, other: "EmissionsCostRate", tol: float = 0.0) -> bool:
        return (
            np.max(np.abs(self.tau_d - other.tau_d)) <= tol
            and np.max(np.abs(self.zeta_d - other.zeta_d)) <= tol
            and np.max(np.abs(self.kappa_d - other.kappa_d)) <= tol
        )


@dataclass(frozen=True)
class TransitionScenario:
    """A named carbon-price schedule plus intensity curves on a common clock.

    t_ref anchors curve time: intensity values at absolute year y are read at
    s = y - t_ref.  By default t_ref = t_circ (curves calibrated at the
    transition start); calibrations anchored earlier pass their own t_ref.
    """

    name: str
    schedule: CarbonPriceSchedule
    intensities: IntensitySet
    t_ref: int | None = None

    def __post_init__(self) -> None:
        if self.t_ref is None:
            object.__setattr__(self, "t_ref", self.schedule.t_circ)

    @property
    def t_circ(self) -> int:
        return self.schedule.t_circ

    @property
    def t_star(self) -> int:
        return self.schedule.t_star

    @property
    def n_sectors(self) -> int:
        return self.intensities.n_sectors


def emissions_cost_rate(scenario: TransitionScenario, t: int) -> EmissionsCostRate:
    """Cost-rate triple at absolute year t.

    Raises PriceDominance when any production cost rate tau*delta reaches 1,
    where the model leaves no post-cost revenue.
    """
    delta = carbon_price(scenario.schedule, t)
    s = t - scenario.t_ref
    kit = scenario.intensities
    tau_d = delta * np.array([intensity(c, s) for c in kit.tau])
    zeta_d = delta * np.array([[intensity(c, s) for c in row] for row in kit.zeta])
    kappa_d = delta * np.array([intensity(c, s) for c in kit.kappa])
    if tau_d.max() >= 1.0:
        worst = int(np.argmax(tau_d))
        raise PriceDominance(
            f"tau*delta = {tau_d[worst]:.4g} >= 1 for sector {worst} at year {t}"
        )
    return EmissionsCostRate(tau_d, zeta_d, kappa_d)


@dataclass(frozen=True)
class PriceOutputReport:
    """Result of the revenue-dominance check delta_t * max_i tau_0^i < 1."""

    max_product: float
    max_year: int
    passed: bool


def validate_price_vs_output(
    schedule: CarbonPriceSchedule, tau: tuple[IntensityCurve, ...], t_ref: int | None = None
) -> PriceOutputReport:
    """Check that the carbon price never dominates initial production intensities.

    Scans every year from min(t_ref, t_circ) through t_star (the price is
    constant outside that window) against max_i tau_0^i.
    """
    t_ref = schedule.t_circ if t_ref is None else t_ref
    tau0 = max(c.y0 for c in tau)
    years = np.arange(min(t_ref, schedule.t_circ), schedule.t_star + 1)
    products = carbon_price(schedule, years) * tau0
    worst = int(np.argmax(products))
    return PriceOutputReport(
        max_product=float(products[worst]),
        max_year=int(years[worst]),
        passed=bool(products[worst] < 1.0),
    )


def _curve_from_dict(spec: dict, t_star_curve: int) -> IntensityCurve:
    return IntensityCurve(
        y0=float(spec["y0"]), g0=float(spec["g0"]), theta=float(spec["theta"]),
        t_star=t_star_curve,
    )


def scenario_from_dict(raw: dict) -> TransitionScenario:
    """Build a scenario from the JSON document format.

    Keys: name, delta0, t_circ, t_star, mode ("geometric"|"explicit"), eta?,
    prices? [{year, value}], t_ref?, intensities {tau: [curve], zeta: [[curve]],
    kappa: [curve]} with each curve {y0, g0, theta}.  Units: euro/ton, ton/euro.
    """
    mode = raw.get("mode", "geometric")
    t_circ, t_star = int(raw["t_circ"]), int(raw["t_star"])
    if mode == "explicit":
        prices = tuple((int(p["year"]), float(p["value"])) for p in raw["prices"])
        schedule = CarbonPriceSchedule(
            delta0=float(raw["delta0"]), t_circ=t_circ, t_star=t_star, prices=prices
        )
    elif mode == "geometric":
        schedule = CarbonPriceSchedule(
            delta0=float(raw["delta0"]), t_circ=t_circ, t_star=t_star, eta=float(raw["eta"])
        )
    else:
        raise ValueError(f"unknown schedule mode {mode!r}")
    t_ref = int(raw.get("t_ref", t_circ))
    t_star_curve = t_star - t_ref
    kit = raw["intensities"]
    intensities = IntensitySet(
        tau=tuple(_curve_from_dict(c, t_star_curve) for c in kit["tau"]),
        zeta=tuple(tuple(_curve_from_dict(c, t_star_curve) for c in row) for row in kit["zeta"]),
        kappa=tuple(_curve_from_dict(c, t_star_curve) for c in kit["kappa"]),
    )
    return TransitionScenario(
        name=str(raw["name"]), schedule=schedule, intensities=intensities, t_ref=t_ref
    )


def scenario_to_dict(scenario: TransitionScenario) -> dict:
    """Inverse of scenario_from_dict."""
    sched = scenario.schedule
    raw: dict = {
        "name": scenario.name,
        "delta0": sched.delta0,
        "t_circ": sched.t_circ,
        "t_star": sched.t_star,
        "t_ref": scenario.t_ref,
    }
    if sched.prices is not None:
        raw["mode"] = "explicit"
        raw["prices"] = [{"year": y, "value": v} for y, v in sched.prices]
    else:
        raw["mode"] = "geometric"
        raw["eta"] = sched.eta

    def curve_dict(c: IntensityCurve) -> dict:
        return {"y0": c.y0, "g0": c.g0, "theta": c.theta}

    kit = scenario.intensities
    raw["intensities"] = {
        "tau": [curve_dict(c) for c in kit.tau],
        "zeta": [[curve_dict(c) for c in row] for row in kit.zeta],
        "kappa": [curve_dict(c) for c in kit.kappa],
    }
    return raw


def load_scenario(path: str | Path) -> TransitionScenario:
    """Read a scenario JSON file."""
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(scenario: TransitionScenario, path: str | Path) -> None:
    """Write a scenario JSON file."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)
        fh.write("\n")
