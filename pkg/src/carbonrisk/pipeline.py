"""End-to-end orchestration: ingest, calibrate, simulate, risk, report.

The run configuration is a JSON document pointing at the input CSV files
and scenario definitions.  Ingestion validates everything up front and
reports every violation at once.  Calibration produces a parameter bundle
(economy, productivity dynamics, intensity curve fits, group loadings and
barriers) with provenance hashes.  Risk measures for all scenarios share
one path ensemble, so scenario comparisons are common-random-number
comparisons and reports are bit-identical across worker counts.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .calibration import (
    BarrierFit,
    DefaultHistory,
    EmissionsPanel,
    IntensityFit,
    LoadingFit,
    SectorPanel,
    estimate_elasticities,
    estimate_var,
    fit_barrier_mle,
    fit_factor_loadings,
    fit_intensity_curve,
    intensity_from_flows,
    loadings_to_theta_space,
)
from .credit import (
    Portfolio,
    RiskConfig,
    RiskEstimates,
    SensitivityEstimates,
    loss_sensitivity,
    mc_risk_estimates,
)
from .economy import EconomyParams, output_cost_shift
from .errors import (
    CarbonRiskError,
    CoverageError,
    SchemaError,
    UnitError,
    WellPosednessError,
    WellPosednessWarning,
)
from .productivity import PathEnsemble, VarParams, check_stationary, simulate_paths
from .transition import (
    IntensityCurve,
    IntensitySet,
    TransitionScenario,
    emissions_cost_rate,
    load_scenario,
)
from .valuation import FirmSpec, check_well_posed

Array = np.ndarray

REPORT_COLUMNS = (
    "scenario",
    "year",
    "group",
    "sector",
    "measure",
    "value",
    "stderr",
    "lo",
    "hi",
    "seed",
    "n_paths",
    "bundle_hash",
)

CONFIDENCE_Z = 1.96

DATA_KEYS = (
    "sector_panel",
    "flows",
    "emissions",
    "flow_emissions",
    "firm_growth",
    "default_history",
    "portfolio",
)


@dataclass(frozen=True)
class RunConfig:
    """Paths, scenario list, and numeric settings for one pipeline run."""

    data: dict[str, Path]
    scenario_paths: tuple[Path, ...]
    risk: RiskConfig
    rate: float = 0.05
    renormalize: bool = True
    phi: float = 1.0
    start_year: int | None = None
    end_year: int | None = None
    units: dict[str, str] = field(default_factory=dict)
    direction: tuple[float, ...] | None = None
    out_dir: Path = Path("reports")
    formats: tuple[str, ...] = ("csv", "json", "plot")

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path) -> "RunConfig":
        risk_raw = dict(raw.get("risk", {}))
        direction = risk_raw.pop("direction", raw.get("direction"))
        try:
            risk = RiskConfig(**risk_raw)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"risk settings: {exc}") from exc
        econ_raw = raw.get("economy", {})
        data = {
            key: (base_dir / value)
            for key, value in raw.get("data", {}).items()
        }
        unknown = set(data) - set(DATA_KEYS)
        if unknown:
            raise SchemaError(f"unknown data keys in config: {sorted(unknown)}")
        return cls(
            data=data,
            scenario_paths=tuple(base_dir / p for p in raw.get("scenarios", [])),
            risk=risk,
            rate=float(raw.get("rate", 0.05)),
            renormalize=bool(econ_raw.get("renormalize", True)),
            phi=float(econ_raw.get("phi", 1.0)),
            start_year=raw.get("start_year"),
            end_year=raw.get("end_year"),
            units=dict(raw.get("units", {})),
            direction=tuple(direction) if direction is not None else None,
            out_dir=base_dir / raw.get("out", "reports"),
            formats=tuple(raw.get("formats", ("csv", "json", "plot"))),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, path.parent)


@dataclass(frozen=True, eq=False)
class IngestedData:
    """Validated inputs for one run."""

    panel: SectorPanel
    emissions: EmissionsPanel | None
    portfolio: Portfolio
    history: DefaultHistory | None
    firm_growth: dict[str, Array] | None
    scenarios: tuple[TransitionScenario, ...]
    sectors: tuple[str, ...]


class _Violations:
    """Collects every validation failure before raising one error per category."""

    def __init__(self) -> None:
        self.schema: list[str] = []
        self.unit: list[str] = []
        self.coverage: list[str] = []

    def raise_if_any(self) -> None:
        message = "\n".join(
            f"[{kind}] {msg}"
            for kind, bucket in (
                ("schema", self.schema),
                ("unit", self.unit),
                ("coverage", self.coverage),
            )
            for msg in bucket
        )
        if self.schema:
            raise SchemaError(message)
        if self.unit:
            raise UnitError(message)
        if self.coverage:
            raise CoverageError(message)


def _read_csv(
    path: Path, required: Sequence[str], vio: _Violations, label: str
) -> pd.DataFrame | None:
    if not path.exists():
        vio.schema.append(f"{label}: file not found: {path}")
        return None
    try:
        frame = pd.read_csv(path)
    except Exception as exc:
        vio.schema.append(f"{label}: cannot parse {path}: {exc}")
        return None
    missing = [c for c in required if c not in frame.columns]
    if missing:
        vio.schema.append(f"{label}: missing columns {missing}")
        return None
    for col in required:
        if col in ("sector", "group", "firm", "firm_id", "input_sector", "output_sector"):
            continue
        coerced = pd.to_numeric(frame[col], errors="coerce")
        bad = frame[col].notna() & coerced.isna()
        if bad.any():
            rows = frame.index[bad].tolist()[:5]
            vio.schema.append(f"{label}: non-numeric {col} at rows {rows}")
        frame[col] = coerced
    return frame


def _sector_grid(
    frame: pd.DataFrame,
    sectors: tuple[str, ...],
    years: tuple[int, ...],
    column: str,
    vio: _Violations,
    label: str,
    positive: bool,
) -> Array:
    grid = np.full((len(years), len(sectors)), np.nan)
    y_index = {y: t for t, y in enumerate(years)}
    s_index = {s: i for i, s in enumerate(sectors)}
    for row in frame.itertuples(index=False):
        if np.isnan(row.year):
            continue
        y = y_index.get(int(row.year))
        i = s_index.get(getattr(row, "sector"))
        if y is None or i is None:
            continue
        grid[y, i] = getattr(row, column)
    for t, y in enumerate(years):
        for i, s in enumerate(sectors):
            v = grid[t, i]
            if np.isnan(v):
                vio.coverage.append(f"{label}: missing {column} for (year {y}, {s})")
            elif positive and v <= 0:
                vio.coverage.append(
                    f"{label}: nonpositive {column} = {v} at (year {y}, {s})"
                )
            elif not positive and v < 0:
                vio.coverage.append(
                    f"{label}: negative {column} = {v} at (year {y}, {s})"
                )
    return grid


def _pair_grid(
    frame: pd.DataFrame,
    sectors: tuple[str, ...],
    years: tuple[int, ...],
    column: str,
    vio: _Violations,
    label: str,
) -> Array:
    """(years, input sector, output sector) grid; absent pairs count as zero."""
    grid = np.zeros((len(years), len(sectors), len(sectors)))
    y_index = {y: t for t, y in enumerate(years)}
    s_index = {s: i for i, s in enumerate(sectors)}
    seen: set[tuple[int, str, str]] = set()
    for row in frame.itertuples(index=False):
        if np.isnan(row.year):
            continue
        year = int(row.year)
        src, dst = getattr(row, "input_sector"), getattr(row, "output_sector")
        if year not in y_index:
            continue
        if src not in s_index or dst not in s_index:
            vio.schema.append(f"{label}: unknown sector pair ({src}, {dst})")
            continue
        key = (year, src, dst)
        if key in seen:
            vio.schema.append(f"{label}: duplicate row for {key}")
            continue
        seen.add(key)
        value = getattr(row, column)
        if np.isnan(value):
            vio.coverage.append(f"{label}: missing {column} for {key}")
            continue
        if value < 0:
            vio.coverage.append(f"{label}: negative {column} = {value} at {key}")
            continue
        grid[y_index[year], s_index[src], s_index[dst]] = value
    return grid


def _build_portfolio(
    frame: pd.DataFrame, sectors: tuple[str, ...], vio: _Violations
) -> Portfolio | None:
    firms = []
    a_cols = [f"a_{s}" for s in sectors]
    missing = [c for c in a_cols if c not in frame.columns]
    if missing:
        vio.schema.append(f"portfolio: missing loading columns {missing}")
        return None
    for col in a_cols:
        frame[col] = pd.to_numeric(frame[col], errors="coerce")
    for row in frame.itertuples(index=False):
        try:
            firms.append(
                FirmSpec(
                    id=str(row.firm_id),
                    group=str(row.group),
                    a=np.array([getattr(row, c) for c in a_cols], dtype=float),
                    sigma_b=float(row.sigma_b),
                    f0=float(row.f0),
                    b_ratio=float(row.b_ratio),
                    ead=float(row.ead),
                    lgd=float(row.lgd),
                )
            )
        except (ValueError, TypeError) as exc:
            vio.coverage.append(f"portfolio: firm {row.firm_id}: {exc}")
    if not firms:
        vio.coverage.append("portfolio: no valid firm rows")
    if vio.coverage or vio.schema:
        return None
    try:
        return Portfolio(firms=tuple(firms))
    except ValueError as exc:
        vio.schema.append(f"portfolio: {exc}")
        return None


def ingest(config: RunConfig) -> IngestedData:
    """Read and validate every input; raises with all violations listed."""
    vio = _Violations()
    for key, expected in (("values", "euro"), ("emissions", "ton")):
        declared = config.units.get(key, expected)
        if declared != expected:
            vio.unit.append(f"units: {key} declared as {declared!r}, expected {expected!r}")

    for key in ("sector_panel", "flows", "portfolio"):
        if key not in config.data:
            vio.schema.append(f"config: data.{key} is required")
    vio.raise_if_any()

    panel_frame = _read_csv(
        config.data["sector_panel"],
        ["year", "sector", "output_value", "consumption_value", "labor_hours",
         "compensation"],
        vio,
        "sector_panel",
    )
    flows_frame = _read_csv(
        config.data["flows"], ["year", "input_sector", "output_sector", "value"],
        vio, "flows",
    )
    portfolio_frame = _read_csv(
        config.data["portfolio"],
        ["firm_id", "group", "f0", "ead", "lgd", "sigma_b", "b_ratio"],
        vio,
        "portfolio",
    )
    vio.raise_if_any()

    if panel_frame.duplicated(["year", "sector"]).any():
        vio.schema.append("sector_panel: duplicate (year, sector) rows")
    years = tuple(sorted(int(y) for y in panel_frame["year"].unique()))
    if years != tuple(range(years[0], years[-1] + 1)):
        vio.coverage.append(f"sector_panel: years are not contiguous: {years[0]}..{years[-1]}")
    sectors = tuple(panel_frame["sector"].drop_duplicates().tolist())
    grids = {
        col: _sector_grid(panel_frame, sectors, years, col, vio, "sector_panel", True)
        for col in ("output_value", "consumption_value", "labor_hours", "compensation")
    }
    flows = _pair_grid(flows_frame, sectors, years, "value", vio, "flows")

    emissions = None
    if "emissions" in config.data:
        em_frame = _read_csv(
            config.data["emissions"],
            ["year", "sector", "firm_emissions", "household_emissions"],
            vio, "emissions",
        )
        if "flow_emissions" not in config.data:
            vio.schema.append("config: data.flow_emissions is required with emissions")
            fe_frame = None
        else:
            fe_frame = _read_csv(
                config.data["flow_emissions"],
                ["year", "input_sector", "output_sector", "emissions"],
                vio, "flow_emissions",
            )
        if em_frame is not None and fe_frame is not None:
            firm_em = _sector_grid(
                em_frame, sectors, years, "firm_emissions", vio, "emissions", False
            )
            house_em = _sector_grid(
                em_frame, sectors, years, "household_emissions", vio, "emissions", False
            )
            flow_em = _pair_grid(fe_frame, sectors, years, "emissions", vio,
                                 "flow_emissions")
            if not vio.coverage and not vio.schema:
                emissions = EmissionsPanel(
                    years=years, firm_emissions=firm_em,
                    household_emissions=house_em, flow_emissions=flow_em,
                )

    portfolio = _build_portfolio(portfolio_frame, sectors, vio)

    history = None
    if "default_history" in config.data:
        h_frame = _read_csv(
            config.data["default_history"], ["year", "group", "rated", "defaulted"],
            vio, "default_history",
        )
        if h_frame is not None:
            h_years = tuple(sorted(int(y) for y in h_frame["year"].unique()))
            h_groups = tuple(h_frame["group"].drop_duplicates().tolist())
            rated = np.zeros((len(h_years), len(h_groups)), dtype=int)
            defaulted = np.zeros_like(rated)
            filled = np.zeros(rated.shape, dtype=bool)
            yi = {y: t for t, y in enumerate(h_years)}
            gi = {g: j for j, g in enumerate(h_groups)}
            for row in h_frame.itertuples(index=False):
                t, j = yi[int(row.year)], gi[row.group]
                rated[t, j] = int(row.rated)
                defaulted[t, j] = int(row.defaulted)
                filled[t, j] = True
            if not filled.all():
                t, j = np.argwhere(~filled)[0]
                vio.coverage.append(
                    f"default_history: missing cell (year {h_years[t]}, "
                    f"group {h_groups[j]})"
                )
            elif np.any(defaulted > rated) or np.any(rated < 0):
                vio.coverage.append("default_history: counts violate 0 <= d <= r")
            else:
                history = DefaultHistory(
                    years=h_years, groups=h_groups, rated=rated, defaulted=defaulted
                )

    firm_growth = None
    if "firm_growth" in config.data:
        g_frame = _read_csv(
            config.data["firm_growth"], ["year", "group", "firm", "growth"],
            vio, "firm_growth",
        )
        if g_frame is not None:
            expected_years = years[1:]
            firm_growth = {}
            for label, sub in g_frame.groupby("group", sort=False):
                piv = sub.pivot_table(
                    index="year", columns="firm", values="growth", aggfunc="first"
                )
                g_years = tuple(int(y) for y in piv.index)
                if g_years != expected_years:
                    vio.coverage.append(
                        f"firm_growth: group {label!r} years do not match the "
                        "sector panel growth years"
                    )
                    continue
                if piv.isna().any().any():
                    vio.coverage.append(f"firm_growth: group {label!r} has missing cells")
                    continue
                firm_growth[str(label)] = piv.to_numpy(dtype=float)

    scenarios = []
    for path in config.scenario_paths:
        try:
            scenario = load_scenario(path)
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
            vio.schema.append(f"scenario {path}: {exc}")
            continue
        if scenario.n_sectors != len(sectors):
            vio.coverage.append(
                f"scenario {scenario.name}: {scenario.n_sectors} sectors, "
                f"data has {len(sectors)}"
            )
            continue
        scenarios.append(scenario)

    vio.raise_if_any()
    panel = SectorPanel(
        years=years,
        output_value=grids["output_value"],
        consumption_value=grids["consumption_value"],
        labor_hours=grids["labor_hours"],
        compensation=grids["compensation"],
        flows=flows,
    )
    return IngestedData(
        panel=panel,
        emissions=emissions,
        portfolio=portfolio,
        history=history,
        firm_growth=firm_growth,
        scenarios=tuple(scenarios),
        sectors=sectors,
    )


@dataclass(frozen=True, eq=False)
class ParameterBundle:
    """Everything calibration produced, with provenance."""

    sectors: tuple[str, ...]
    anchor_year: int
    econ: EconomyParams
    var: VarParams
    coverage: Array
    tau_fits: tuple[IntensityFit, ...] | None
    kappa_fits: tuple[IntensityFit, ...] | None
    zeta_fits: tuple[tuple[IntensityFit | None, ...], ...] | None
    group_loadings: dict[str, LoadingFit]
    group_barriers: dict[str, BarrierFit] | None
    provenance: dict

    def to_dict(self) -> dict:
        def fit_dict(fit: IntensityFit | None) -> dict | None:
            if fit is None:
                return None
            return {"y0": fit.y0, "g0": fit.g0, "theta": fit.theta, "flag": fit.flag}

        return {
            "sectors": list(self.sectors),
            "anchor_year": self.anchor_year,
            "economy": {
                "psi": self.econ.psi.tolist(),
                "lam": self.econ.lam.tolist(),
                "phi": self.econ.phi,
            },
            "var": {
                "mu": self.var.mu.tolist(),
                "gamma": self.var.gamma.tolist(),
                "sigma": self.var.sigma.tolist(),
                "epsilon": self.var.epsilon,
            },
            "coverage": self.coverage.tolist(),
            "intensity_fits": None
            if self.tau_fits is None
            else {
                "tau": [fit_dict(f) for f in self.tau_fits],
                "kappa": [fit_dict(f) for f in self.kappa_fits],
                "zeta": [[fit_dict(f) for f in row] for row in self.zeta_fits],
            },
            "groups": {
                label: {
                    "a": fit.a.tolist(),
                    "sigma_b": fit.sigma_b,
                    "b_ratio": None
                    if self.group_barriers is None or label not in self.group_barriers
                    else self.group_barriers[label].b_ratio,
                    "barrier_flag": None
                    if self.group_barriers is None or label not in self.group_barriers
                    else self.group_barriers[label].flag,
                }
                for label, fit in self.group_loadings.items()
            },
            "provenance": self.provenance,
        }

    @property
    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _data_hashes(config: RunConfig) -> dict[str, str]:
    out = {}
    for key in sorted(config.data):
        path = config.data[key]
        out[key] = hashlib.sha256(path.read_bytes()).hexdigest()[:16]
    for path in config.scenario_paths:
        out[f"scenario:{path.name}"] = hashlib.sha256(path.read_bytes()).hexdigest()[:16]
    return out


def calibrate(data: IngestedData, config: RunConfig) -> ParameterBundle:
    """Fit every model parameter from the ingested panels."""
    elasticities = estimate_elasticities(data.panel)
    econ = EconomyParams(
        psi=elasticities.psi,
        lam=elasticities.lam,
        phi=config.phi,
        renormalize=config.renormalize,
    )
    delta_y = np.diff(np.log(data.panel.output_value), axis=0)
    var = estimate_var(delta_y, econ.lam)
    moduli, stationary = check_stationary(var.gamma)

    tau_fits = kappa_fits = zeta_fits = None
    if data.emissions is not None:
        series = intensity_from_flows(data.emissions, data.panel)
        tau_fits = tuple(
            fit_intensity_curve(series.tau[:, i]) for i in range(len(data.sectors))
        )
        kappa_fits = tuple(
            fit_intensity_curve(series.kappa[:, i]) for i in range(len(data.sectors))
        )
        rows = []
        for j in range(len(data.sectors)):
            row = []
            for i in range(len(data.sectors)):
                cell = series.zeta[:, j, i]
                row.append(fit_intensity_curve(cell) if np.all(cell > 0) else None)
            rows.append(tuple(row))
        zeta_fits = tuple(rows)

    if data.firm_growth:
        raw_loads = fit_factor_loadings(data.firm_growth, delta_y)
        group_loadings = loadings_to_theta_space(raw_loads, econ.lam)
    else:
        group_loadings = {}
        for label in data.portfolio.group_labels:
            members = [data.portfolio.firms[i] for i in data.portfolio.members(label)]
            group_loadings[label] = LoadingFit(
                a=np.mean([f.a for f in members], axis=0),
                sigma_b=float(np.mean([f.sigma_b for f in members])),
            )

    group_barriers = None
    if data.history is not None:
        known = {g for g in data.history.groups if g in group_loadings}
        if known == set(data.history.groups):
            group_barriers = fit_barrier_mle(
                data.history,
                group_loadings,
                var,
                econ,
                r=config.rate,
                seed=config.risk.seed,
                workers=config.risk.workers,
            )

    provenance = {
        "data_hash": _data_hashes(config),
        "gamma_moduli": [float(m) for m in moduli],
        "stationary": bool(stationary),
        "n_years": data.panel.n_years,
        "rate": config.rate,
    }
    return ParameterBundle(
        sectors=data.sectors,
        anchor_year=data.panel.years[0],
        econ=econ,
        var=var,
        coverage=elasticities.coverage,
        tau_fits=tau_fits,
        kappa_fits=kappa_fits,
        zeta_fits=zeta_fits,
        group_loadings=group_loadings,
        group_barriers=group_barriers,
        provenance=provenance,
    )


def _reanchor(fit: IntensityFit | None, shift: int, t_star_rel: int) -> IntensityCurve:
    """Calibrated curve moved to a later anchor year.

    The family is closed under shifts: the new level is the old curve at
    the shift and the growth rate scales by exp(-theta * shift).  Absent
    linkages (zero flow series) get a vanishing placeholder curve; their
    cost rates multiply a zero expenditure share downstream.
    """
    if fit is None or fit.y0 <= 0:
        return IntensityCurve(y0=1e-30, g0=0.0, theta=1.0, t_star=t_star_rel)
    theta = max(fit.theta, 1e-9)
    level = fit.y0 * math.exp(fit.g0 * (1.0 - math.exp(-theta * shift)) / theta)
    return IntensityCurve(
        y0=level, g0=fit.g0 * math.exp(-theta * shift), theta=theta,
        t_star=t_star_rel,
    )


def apply_calibrated_intensities(
    scenario: TransitionScenario, bundle: ParameterBundle
) -> TransitionScenario:
    """Scenario with its intensity curves replaced by the calibrated fits."""
    if bundle.tau_fits is None:
        return scenario
    shift = scenario.t_ref - bundle.anchor_year
    t_star_rel = scenario.t_star - scenario.t_ref
    n = len(bundle.sectors)
    intensities = IntensitySet(
        tau=tuple(_reanchor(bundle.tau_fits[i], shift, t_star_rel) for i in range(n)),
        zeta=tuple(
            tuple(_reanchor(bundle.zeta_fits[j][i], shift, t_star_rel) for i in range(n))
            for j in range(n)
        ),
        kappa=tuple(_reanchor(bundle.kappa_fits[i], shift, t_star_rel) for i in range(n)),
    )
    return replace(scenario, intensities=intensities)


@dataclass(frozen=True, eq=False)
class RiskReport:
    """Long-format measure rows plus run metadata; the unit emitted to disk."""

    meta: dict
    rows: list[dict]


def _row(
    meta: dict,
    scenario: str,
    year: int,
    group: str,
    sector: str,
    measure: str,
    value: float,
    stderr: float | None,
) -> dict:
    lo = hi = None
    if stderr is not None:
        lo = value - CONFIDENCE_Z * stderr
        hi = value + CONFIDENCE_Z * stderr
    return {
        "scenario": scenario,
        "year": year,
        "group": group,
        "sector": sector,
        "measure": measure,
        "value": value,
        "stderr": stderr,
        "lo": lo,
        "hi": hi,
        "seed": meta["seed"],
        "n_paths": meta["n_paths"],
        "bundle_hash": meta["bundle_hash"],
    }


def _growth_base(econ: EconomyParams, ensemble: PathEnsemble) -> Array:
    eye = np.eye(econ.n_sectors)
    flat = ensemble.theta.reshape(-1, econ.n_sectors)
    return np.linalg.solve(eye - econ.lam.T, flat.T).T.reshape(ensemble.theta.shape)


def _scenario_rows(
    meta: dict,
    scenario: TransitionScenario,
    econ: EconomyParams,
    portfolio: Portfolio,
    estimates: RiskEstimates | None,
    growth_base: Array,
    sectors: tuple[str, ...],
    start_year: int,
    end_year: int,
    sens: SensitivityEstimates | None,
) -> list[dict]:
    rows: list[dict] = []
    sev = portfolio.severities
    ead = np.array([f.ead for f in portfolio.firms])
    if estimates is None:
        labels = []
        member_idx = []
    else:
        labels = list(estimates.group_labels) + [""]
        member_idx = [list(portfolio.members(g)) for g in estimates.group_labels]
        member_idx.append(list(range(portfolio.n_firms)))

    for k, year in enumerate(estimates.years if estimates is not None else ()):
        for j, label in enumerate(labels):
            idx = member_idx[j]
            sev_sum = float(sev[idx].sum())
            ead_sum = float(ead[idx].sum())
            if label:
                el, el_se = estimates.el_group[k, j], estimates.el_group_stderr[k, j]
                ul, ul_se = estimates.ul_group[k, j], estimates.ul_group_stderr[k, j]
                es, es_se = estimates.es_group[k, j], estimates.es_group_stderr[k, j]
            else:
                el, el_se = estimates.el_total[k], estimates.el_stderr[k]
                ul, ul_se = estimates.ul_total[k], estimates.ul_stderr[k]
                es, es_se = estimates.es_total[k], estimates.es_stderr[k]
            add = rows.append
            add(_row(meta, scenario.name, year, label, "", "pd",
                     float(el / sev_sum), float(el_se / sev_sum)))
            add(_row(meta, scenario.name, year, label, "", "el", float(el), float(el_se)))
            add(_row(meta, scenario.name, year, label, "", "el_pct",
                     float(el / ead_sum), float(el_se / ead_sum)))
            add(_row(meta, scenario.name, year, label, "", "ul", float(ul), float(ul_se)))
            add(_row(meta, scenario.name, year, label, "", "es", float(es), float(es_se)))
            if sens is not None:
                if label:
                    s_el = sens.el_group[k, j]
                    s_ul = sens.ul_group[k, j]
                    s_es = sens.es_group[k, j]
                else:
                    s_el = sens.el_total[k]
                    s_ul = sens.ul_total[k]
                    s_es = sens.es_total[k]
                add(_row(meta, scenario.name, year, label, "", "sens_el",
                         float(s_el), None))
                add(_row(meta, scenario.name, year, label, "", "sens_ul",
                         float(s_ul), None))
                add(_row(meta, scenario.name, year, label, "", "sens_es",
                         float(s_es), None))

    eye = np.eye(econ.n_sectors)
    m = growth_base.shape[0]
    d_prev = emissions_cost_rate(scenario, start_year)
    v_prev = output_cost_shift(econ, d_prev)
    for year in range(start_year + 1, end_year + 1):
        t = year - start_year
        d_t = emissions_cost_rate(scenario, year)
        v_t = output_cost_shift(econ, d_t)
        shift = np.linalg.solve(eye - econ.lam.T, v_t - v_prev)
        mean = growth_base[:, t, :].mean(axis=0) + shift
        se = growth_base[:, t, :].std(axis=0, ddof=1) / math.sqrt(m)
        for i, sector in enumerate(sectors):
            rows.append(
                _row(meta, scenario.name, year, "", sector, "output_growth",
                     float(mean[i]), float(se[i]))
            )
        v_prev = v_t
    return rows


def run_pipeline(
    config: RunConfig,
    *,
    include_risk: bool = True,
    include_sensitivities: bool = True,
) -> tuple[RiskReport, ParameterBundle]:
    """Execute the full process; deterministic given (config, seed)."""

    def stage(name: str):
        class _Stage:
            def __enter__(self):
                return None

            def __exit__(self, exc_type, exc, tb):
                if exc is not None and isinstance(exc, CarbonRiskError):
                    exc.args = (f"[{name}] {exc}",)
                return False

        return _Stage()

    with stage("ingest"):
        data = ingest(config)
    with stage("calibrate"):
        bundle = calibrate(data, config)

    with stage("scenario"):
        scenarios = tuple(
            apply_calibrated_intensities(s, bundle) for s in data.scenarios
        )
        start_year = config.start_year
        if start_year is None:
            start_year = min((s.t_circ for s in scenarios), default=0)
        end_year = config.end_year
        if end_year is None:
            end_year = max((s.t_star for s in scenarios), default=start_year)
        for scenario in scenarios:
            for year in range(start_year, end_year + config.risk.horizon + 1):
                emissions_cost_rate(scenario, year)

    with stage("wellposed"):
        wp = check_well_posed(data.portfolio.firms, bundle.var, config.rate)
        if wp.norm_gap:
            warnings.warn(
                "operator norm of the feedback matrix is >= 1; the explosion "
                "bound is not verifiable (spectral radius "
                f"{wp.gamma_spectral_radius:.3f})",
                WellPosednessWarning,
                stacklevel=2,
            )
        refuse = not wp.varrho_pass or (not wp.rho_pass and not wp.norm_gap)
        if include_risk and refuse:
            worst = int(np.argmax(wp.varrho))
            raise WellPosednessError(
                "refusing risk computation: "
                f"max varrho = {wp.varrho[worst]:.4g} (firm "
                f"{data.portfolio.firms[worst].id}) vs required < 0; "
                f"rho = {wp.rho} vs r = {config.rate}"
            )

    meta = {
        "seed": config.risk.seed,
        "n_paths": config.risk.n_paths,
        "alpha": config.risk.alpha,
        "horizon": config.risk.horizon,
        "rate": config.rate,
        "start_year": start_year,
        "end_year": end_year,
        "bundle_hash": bundle.hash,
        "scenarios": [s.name for s in scenarios],
        "sectors": list(data.sectors),
        "groups": list(data.portfolio.group_labels),
    }

    with stage("simulate"):
        horizon = end_year - start_year + config.risk.horizon
        ensemble = simulate_paths(
            bundle.var,
            horizon=horizon,
            n_paths=config.risk.n_paths,
            seed=config.risk.seed,
            workers=config.risk.workers,
        )
        growth_base = _growth_base(bundle.econ, ensemble)

    rows: list[dict] = []
    years = range(start_year, end_year + 1)
    for scenario in scenarios:
        estimates = None
        if include_risk:
            with stage(f"risk:{scenario.name}"):
                estimates = mc_risk_estimates(
                    data.portfolio, bundle.econ, scenario, bundle.var, config.risk,
                    r=config.rate, start_year=start_year, years=years,
                    ensemble=ensemble,
                )
        sens = None
        if include_risk and include_sensitivities:
            with stage(f"sensitivity:{scenario.name}"):
                direction = (
                    np.array(config.direction)
                    if config.direction is not None
                    else 1.0
                )
                sens, _ = loss_sensitivity(
                    data.portfolio, bundle.econ, scenario, bundle.var, config.risk,
                    direction, r=config.rate, start_year=start_year, years=years,
                    base=estimates, ensemble=ensemble,
                )
        rows.extend(
            _scenario_rows(
                meta, scenario, bundle.econ, data.portfolio, estimates,
                growth_base, data.sectors, start_year, end_year, sens,
            )
        )

    return RiskReport(meta=meta, rows=rows), bundle


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(
    report: RiskReport, out_dir: str | Path, formats: Sequence[str] = ("csv", "json", "plot")
) -> list[Path]:
    """Write the report files; returns the paths written.

    The CSV is a stable long format (one measure per row); plot files hold
    one mean/lo/hi series per figure analogue.  Emission is a pure function
    of the report contents, so re-emitting a reloaded report reproduces the
    bytes exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        lines = [",".join(REPORT_COLUMNS)]
        for row in report.rows:
            lines.append(",".join(_format_cell(row.get(c)) for c in REPORT_COLUMNS))
        path = out / "report.csv"
        path.write_text("\n".join(lines) + "\n")
        written.append(path)
    if "json" in formats:
        path = out / "report.json"
        path.write_text(
            json.dumps({"meta": report.meta, "rows": report.rows}, indent=2) + "\n"
        )
        written.append(path)
    if "plot" in formats:
        figures = {
            "output_growth": ("sector", "plot_output_growth.csv"),
            "pd": ("group", "plot_pd.csv"),
            "el": ("group", "plot_el.csv"),
            "ul": ("group", "plot_ul.csv"),
        }
        for measure, (key, filename) in figures.items():
            lines = [",".join(["scenario", "year", key, "mean", "lo", "hi"])]
            for row in report.rows:
                if row["measure"] != measure:
                    continue
                lines.append(
                    ",".join(
                        _format_cell(v)
                        for v in (
                            row["scenario"], row["year"], row[key],
                            row["value"], row["lo"], row["hi"],
                        )
                    )
                )
            path = out / filename
            path.write_text("\n".join(lines) + "\n")
            written.append(path)
    return written


def load_report(path: str | Path) -> RiskReport:
    """Read back a report.json produced by emit_report."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return RiskReport(meta=raw["meta"], rows=raw["rows"])
