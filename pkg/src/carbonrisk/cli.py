"""Command line entry points.

Exit codes: 0 on success, 2 for schema/unit/coverage problems in the
inputs, 3 when the transition or valuation regime is rejected (carbon
cost dominating a price, or a well-posedness inequality failing), 4 for
numeric failures during fitting or simulation.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import click

from .errors import (
    CarbonRiskError,
    CoverageError,
    PriceDominance,
    SchemaError,
    UnitError,
    WellPosednessError,
)
from .pipeline import (
    RunConfig,
    apply_calibrated_intensities,
    calibrate as run_calibrate,
    emit_report,
    ingest,
    run_pipeline,
)
from .synthetic import write_fixture
from .transition import emissions_cost_rate
from .valuation import check_well_posed

EXIT_INPUT = 2
EXIT_REGIME = 3
EXIT_NUMERIC = 4


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (SchemaError, UnitError, CoverageError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INPUT)
        except (PriceDominance, WellPosednessError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_REGIME)
        except CarbonRiskError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)

    return wrapper


def _common(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=False), help="Run configuration JSON.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override the RNG seed.")(fn)
    fn = click.option("--paths", type=int, default=None,
                      help="Override the Monte Carlo path count.")(fn)
    fn = click.option("--alpha", type=float, default=None,
                      help="Override the tail confidence level.")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(), default=None,
                      help="Override the output directory.")(fn)
    fn = click.option("--workers", type=int, default=None,
                      help="Override the simulation worker count.")(fn)
    return fn


def _load_config(config_path, seed, paths, alpha, out_dir, workers) -> RunConfig:
    config = RunConfig.from_json(config_path)
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if paths is not None:
        updates["n_paths"] = paths
    if alpha is not None:
        updates["alpha"] = alpha
    if workers is not None:
        updates["workers"] = workers
    if updates:
        config = replace(config, risk=replace(config.risk, **updates))
    if out_dir is not None:
        config = replace(config, out_dir=Path(out_dir))
    return config


def _emit(report, bundle, config) -> None:
    written = emit_report(report, config.out_dir, config.formats)
    bundle_path = Path(config.out_dir) / "bundle.json"
    bundle.save(bundle_path)
    written.append(bundle_path)
    for path in written:
        click.echo(f"wrote {path}")


def _echo_headline(report) -> None:
    end_year = report.meta["end_year"]
    for name in report.meta["scenarios"]:
        parts = []
        for row in report.rows:
            if (
                row["scenario"] == name
                and row["year"] == end_year
                and row["group"] == ""
                and row["measure"] in ("pd", "el", "ul")
            ):
                if row["measure"] == "pd":
                    parts.append(
                        f"PD {100 * row['value']:.2f}% "
                        f"[{100 * row['lo']:.2f}, {100 * row['hi']:.2f}]"
                    )
                else:
                    parts.append(f"{row['measure'].upper()} {row['value']:,.0f}")
        if parts:
            click.echo(f"{name} ({end_year}): " + "; ".join(parts))


@click.group()
def main() -> None:
    """Transition-scenario credit risk toolkit."""


@main.command()
@_common
@_guarded
def calibrate(config_path, seed, paths, alpha, out_dir, workers) -> None:
    """Fit all model parameters and write the parameter bundle."""
    config = _load_config(config_path, seed, paths, alpha, out_dir, workers)
    data = ingest(config)
    bundle = run_calibrate(data, config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle_path = out / "bundle.json"
    bundle.save(bundle_path)
    stationary = bundle.provenance["stationary"]
    click.echo(f"sectors: {', '.join(bundle.sectors)}")
    click.echo(f"productivity dynamics stationary: {stationary}")
    click.echo(
        "coverage by sector: "
        + ", ".join(f"{s}={c:.3f}" for s, c in zip(bundle.sectors, bundle.coverage))
    )
    if bundle.group_barriers:
        for label, fit in bundle.group_barriers.items():
            note = f" ({fit.flag})" if fit.flag else ""
            click.echo(f"group {label}: barrier ratio {fit.b_ratio:.4f}{note}")
    click.echo(f"bundle hash: {bundle.hash}")
    click.echo(f"wrote {bundle_path}")


@main.command()
@_common
@_guarded
def simulate(config_path, seed, paths, alpha, out_dir, workers) -> None:
    """Draw the path ensemble and report output-growth paths per scenario."""
    config = _load_config(config_path, seed, paths, alpha, out_dir, workers)
    report, bundle = run_pipeline(config, include_risk=False)
    _emit(report, bundle, config)


@main.command()
@_common
@_guarded
def risk(config_path, seed, paths, alpha, out_dir, workers) -> None:
    """Compute PD, EL, UL, and ES for every scenario."""
    config = _load_config(config_path, seed, paths, alpha, out_dir, workers)
    report, bundle = run_pipeline(config, include_sensitivities=False)
    _emit(report, bundle, config)
    _echo_headline(report)


@main.command()
@_common
@click.option("--theta-fd", type=float, default=None,
              help="Override the finite difference step for sensitivities.")
@_guarded
def sensitivity(config_path, seed, paths, alpha, out_dir, workers, theta_fd) -> None:
    """Risk measures plus carbon price sensitivities per scenario."""
    config = _load_config(config_path, seed, paths, alpha, out_dir, workers)
    if theta_fd is not None:
        config = replace(config, risk=replace(config.risk, theta_fd=theta_fd))
    report, bundle = run_pipeline(config, include_sensitivities=True)
    _emit(report, bundle, config)
    _echo_headline(report)


@main.command()
@_common
@_guarded
def validate(config_path, seed, paths, alpha, out_dir, workers) -> None:
    """Check inputs, calibration, scenarios, and well-posedness; no simulation."""
    config = _load_config(config_path, seed, paths, alpha, out_dir, workers)
    data = ingest(config)
    click.echo(
        f"inputs ok: {len(data.sectors)} sectors, {data.panel.n_years} years, "
        f"{data.portfolio.n_firms} firms, {len(data.scenarios)} scenarios"
    )
    bundle = run_calibrate(data, config)
    click.echo(f"calibration ok: bundle hash {bundle.hash}")
    scenarios = [apply_calibrated_intensities(s, bundle) for s in data.scenarios]
    start = config.start_year
    if start is None:
        start = min((s.t_circ for s in scenarios), default=0)
    end = config.end_year
    if end is None:
        end = max((s.t_star for s in scenarios), default=start)
    for scenario in scenarios:
        for year in range(start, end + config.risk.horizon + 1):
            emissions_cost_rate(scenario, year)
    click.echo("scenario price/output checks ok")
    wp = check_well_posed(data.portfolio.firms, bundle.var, config.rate)
    if not wp.passed:
        raise WellPosednessError(
            f"well-posedness fails: max varrho = {wp.varrho.max():.4g} "
            f"(need < 0), rho = {wp.rho} vs r = {config.rate}"
        )
    click.echo(
        f"well-posedness ok: max varrho = {wp.varrho.max():.4g}, "
        f"rho = {wp.rho:.4g} < r = {config.rate}"
    )


@main.command()
@click.option("--out", "out_dir", type=click.Path(), default="demo-reports",
              help="Directory for the demo outputs.")
@click.option("--paths", type=int, default=None, help="Override the path count.")
@click.option("--seed", type=int, default=None, help="Override the RNG seed.")
@_guarded
def demo(out_dir, paths, seed) -> None:
    """Run the bundled synthetic dataset end to end."""
    data_root = Path(str(resources.files("carbonrisk").joinpath("data")))
    config_path = data_root / "demo_config.json"
    if not config_path.exists():
        data_root = Path(out_dir) / "data"
        write_fixture(data_root)
        config_path = data_root / "demo_config.json"
        click.echo(f"generated fixture data under {data_root}")
    config = _load_config(config_path, seed, paths, None, out_dir, None)
    report, bundle = run_pipeline(config)
    _emit(report, bundle, config)
    _echo_headline(report)


if __name__ == "__main__":
    main()
