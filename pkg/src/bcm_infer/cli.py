"""Command-line interface for bcm-infer."""

import logging
import sys
from typing import Any, Callable, Optional

import click
from pydantic import ValidationError

from .config import AppConfig, ConfigError
from .constants import Granularity, Method
from .harness import (
    ResultStore,
    RunSettings,
    RunSpec,
    RunStatus,
    Specification,
    Stage,
    SweepMetrics,
    aggregate,
    build_spec_matrix,
    generate_ground_truth,
    load_summaries,
    run_sweep,
)
from .harness.aggregate import NORMALIZABLE, default_metrics, normalize_summary
from .metrics import Baseline
from .report import (
    EmptySelectionError,
    FigureKind,
    FigureSpec,
    default_figure_specs,
    print_aggregate_summary,
    print_simulation_summary,
    print_sweep_summary,
    render_figure,
)
from .utils.logging import setup_logging

logger = logging.getLogger(__name__)


def _float_list(ctx: click.Context, param: click.Parameter, value: Optional[str]):
    if value is None:
        return None
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}")


def common_options(func: Callable) -> Callable:
    """Options shared by every subcommand."""
    options = [
        click.option(
            "--config",
            "config_path",
            type=click.Path(exists=True, dir_okay=False),
            help="JSON config file",
        ),
        click.option("--workers", type=int, help="Maximum concurrent runs (default: 1)"),
        click.option(
            "--epsilons",
            callback=_float_list,
            help="Comma-separated confidence bounds (default: 0.2,0.3)",
        ),
        click.option(
            "--noise",
            "noise_levels",
            callback=_float_list,
            help="Comma-separated noise levels (default: 0,1e-4,2e-4,4e-4,8e-4,1.6e-3)",
        ),
        click.option("--seeds", type=int, help="Number of seeds per cell (default: 10)"),
        click.option("--out", type=click.Path(file_okay=False), help="Output directory"),
        click.option(
            "--log-level",
            type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
            help="Logging level (default: INFO)",
        ),
        click.option(
            "--log-format",
            type=click.Choice(["text", "json"], case_sensitive=False),
            help="Log format (default: text)",
        ),
        click.option(
            "--telemetry/--no-telemetry",
            default=None,
            help="Write Prometheus sweep metrics to metrics.prom (default: enabled)",
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def load_config(config_path: Optional[str], **kwargs: Any) -> AppConfig:
    """Resolve the configuration or exit with status 2 naming the bad field."""
    try:
        config = AppConfig.load(kwargs, config_path)
    except ValidationError as e:
        for error in e.errors():
            location = ".".join(str(part) for part in error["loc"]) or "config"
            click.echo(f"Invalid configuration: {location}: {error['msg']}", err=True)
        sys.exit(2)
    except ConfigError as e:
        click.echo(f"Invalid configuration: {e}", err=True)
        sys.exit(2)
    setup_logging(level=config.log_level, format_type=config.log_format)
    logger.debug(f"\n{config.display()}")
    return config


def _open_store(config: AppConfig) -> ResultStore:
    store = ResultStore(config.out)
    try:
        store.initialize()
    except OSError as e:
        click.echo(f"Error: cannot write output directory {config.out}: {e}", err=True)
        sys.exit(1)
    return store


def _settings(config: AppConfig) -> RunSettings:
    return RunSettings(filter=config.filter, lbi=config.lbi, snapshot=config.to_dict())


def _metrics(config: AppConfig) -> Optional[SweepMetrics]:
    return SweepMetrics() if config.telemetry else None


def _write_metrics(store: ResultStore, metrics: Optional[SweepMetrics]) -> None:
    if metrics is not None:
        metrics.write(store.telemetry_path)


def _select_specs(
    config: AppConfig, method: Optional[str], granularity: str, misspecify: Optional[bool]
) -> list[RunSpec]:
    methods = [Method(method)] if method else [Method.LBI, Method.DA]
    if granularity == "all":
        granularities = list(Granularity)
    else:
        granularities = [Granularity(granularity)]
        if methods == [Method.LBI] and granularities[0] is not Granularity.EDGE:
            raise click.UsageError(
                "likelihood-based inference (--method lbi) only supports --granularity edge"
            )
    if misspecify is None:
        specifications = list(Specification)
    elif misspecify:
        specifications = [Specification.MISSPECIFIED]
    else:
        specifications = [Specification.CORRECT]
    try:
        return build_spec_matrix(config.grid, methods, granularities, specifications)
    except ValueError as e:
        raise click.UsageError(str(e))


def _require_truth(store: ResultStore, config: AppConfig) -> None:
    missing = [c for c in config.grid.cells() if not store.has_truth(c)]
    if missing:
        click.echo(
            f"Error: ground truth missing for {len(missing)} of {len(config.grid)} cells "
            f"(e.g. {missing[0].cell_id}); run 'bcm-infer simulate' first",
            err=True,
        )
        sys.exit(1)


def _simulate(config: AppConfig, store: ResultStore, metrics: Optional[SweepMetrics]) -> None:
    cells = config.grid.cells()
    existing = sum(store.has_truth(c) for c in cells)
    try:
        generate_ground_truth(config.grid, store, export_edges=config.export_edges)
    except OSError as e:
        click.echo(f"Error: cannot write ground truth: {e}", err=True)
        sys.exit(1)
    if metrics is not None:
        metrics.record_trajectories(len(cells) - existing)
    logger.info(
        "Ground truth ready", extra={"cells": len(cells), "generated": len(cells) - existing}
    )
    print_simulation_summary(store, cells, echo=click.echo)


def _sweep(
    config: AppConfig,
    store: ResultStore,
    specs: list[RunSpec],
    stage: Stage,
    metrics: Optional[SweepMetrics],
) -> int:
    _, stats = run_sweep(
        store, specs, _settings(config), stage=stage, workers=config.workers, metrics=metrics
    )
    if stats.completed == 0 and stats.failed == 0:
        click.echo("No pending runs")
    print_sweep_summary(stats, stage.value, echo=click.echo)
    return stats.failed


def _report(config: AppConfig, store: ResultStore, figures: list[FigureSpec]) -> int:
    summaries = load_summaries(store)
    if not summaries:
        click.echo("Error: no completed runs; run 'infer' and 'forecast' first", err=True)
        return 1
    baseline = Baseline(config.baseline)
    metrics = default_metrics()
    if baseline is not Baseline.NONE:
        summaries = [normalize_summary(s, baseline) for s in summaries]
        metrics += [f"{m}_norm" for m in NORMALIZABLE]
    stats = aggregate(summaries, metrics=metrics)
    path = store.write_aggregate(stats)
    click.echo(f"Wrote {path}")
    print_aggregate_summary(stats, echo=click.echo)

    failed = 0
    for spec in figures or default_figure_specs(summaries):
        try:
            written = render_figure(spec, store, summaries)
            click.echo(f"Wrote {written}")
        except EmptySelectionError as e:
            click.echo(f"Error: {e}", err=True)
            failed += 1
    return failed


@click.group()
@click.version_option(package_name="bcm-infer")
def cli():
    """bcm-infer - latent opinion inference for the bounded-confidence model."""
    pass


@cli.command()
@common_options
@click.option(
    "--export-edges/--no-export-edges",
    default=None,
    help="Also write per-step edge indicators as edges.csv (default: disabled)",
)
def simulate(config_path, **kwargs):
    """Generate ground-truth trajectories for the grid.

    Examples:

    \b
      # Default grid: 2 epsilons x 6 noise levels x 10 seeds
      bcm-infer simulate --out results

    \b
      # One noise-free trajectory
      bcm-infer simulate --epsilons 0.2 --noise 0 --seeds 1
    """
    config = load_config(config_path, **kwargs)
    store = _open_store(config)
    metrics = _metrics(config)
    _simulate(config, store, metrics)
    _write_metrics(store, metrics)


@cli.command()
@common_options
@click.option(
    "--method",
    type=click.Choice([m.value for m in Method]),
    help="Inference method (default: both)",
)
@click.option(
    "--granularity",
    type=click.Choice([g.value for g in Granularity] + ["all"]),
    default="all",
    show_default=True,
    help="Observation granularity",
)
@click.option(
    "--misspecify/--no-misspecify",
    default=None,
    help="Only mis-specified (or only correct) runs (default: both)",
)
def infer(config_path, method, granularity, misspecify, **kwargs):
    """Reconstruct latent opinions up to the training cutoff.

    Examples:

    \b
      # Likelihood-based inference, correct and swapped epsilon
      bcm-infer infer --method lbi

    \b
      # Ensemble Kalman filter at every granularity on 4 workers
      bcm-infer infer --method da --granularity all --workers 4
    """
    config = load_config(config_path, **kwargs)
    specs = _select_specs(config, method, granularity, misspecify)
    store = _open_store(config)
    _require_truth(store, config)
    metrics = _metrics(config)
    failed = _sweep(config, store, specs, Stage.INFER, metrics)
    _write_metrics(store, metrics)
    if failed:
        sys.exit(1)


@cli.command()
@common_options
def forecast(config_path, **kwargs):
    """Forecast every inferred run to the horizon and score it."""
    config = load_config(config_path, **kwargs)
    store = _open_store(config)
    specs = [
        RunSpec.model_validate(entry["spec"])
        for entry in store.runs_with_status(RunStatus.INFERRED)
    ]
    if not specs:
        click.echo("No pending runs")
        return
    metrics = _metrics(config)
    failed = _sweep(config, store, specs, Stage.FORECAST, metrics)
    _write_metrics(store, metrics)
    if failed:
        sys.exit(1)


@cli.command()
@common_options
@click.option(
    "--baseline",
    type=click.Choice([b.value for b in Baseline]),
    help="Normalise forecast errors by a baseline (default: none)",
)
@click.option(
    "--figure",
    "kind",
    type=click.Choice([k.value for k in FigureKind]),
    help="Render one figure instead of the default set",
)
@click.option("--method", "fig_method", type=click.Choice([m.value for m in Method]))
@click.option("--granularity", "fig_granularity", type=click.Choice([g.value for g in Granularity]))
@click.option("--epsilon", "fig_epsilon", type=float, help="Select runs with this epsilon")
@click.option("--sigma", "fig_sigma", type=float, help="Select runs with this noise level")
@click.option(
    "--specification", "fig_specification", type=click.Choice([s.value for s in Specification])
)
@click.option("--metric", "fig_metric", type=str, help="Metric for boxplots")
@click.option("--output", "fig_output", type=click.Path(), help="SVG file or directory")
def report(
    config_path,
    kind,
    fig_method,
    fig_granularity,
    fig_epsilon,
    fig_sigma,
    fig_specification,
    fig_metric,
    fig_output,
    **kwargs,
):
    """Aggregate completed runs and emit SVG figures.

    Examples:

    \b
      # aggregate.csv and the full figure set
      bcm-infer report --out results

    \b
      # One trace figure for LBI in the polarization regime
      bcm-infer report --figure trajectory-traces --method lbi --epsilon 0.2 --sigma 0
    """
    config = load_config(config_path, **kwargs)
    store = _open_store(config)
    figures: list[FigureSpec] = []
    if kind:
        try:
            figures.append(
                FigureSpec(
                    kind=kind,
                    method=fig_method,
                    granularity=fig_granularity,
                    epsilon=fig_epsilon,
                    noise_sigma=fig_sigma,
                    specification=fig_specification,
                    metric=fig_metric,
                    output=fig_output,
                )
            )
        except ValidationError as e:
            raise click.UsageError(str(e))
    if _report(config, store, figures):
        sys.exit(1)


@cli.command("run-all")
@common_options
@click.option(
    "--export-edges/--no-export-edges",
    default=None,
    help="Also write per-step edge indicators as edges.csv (default: disabled)",
)
@click.option(
    "--baseline",
    type=click.Choice([b.value for b in Baseline]),
    help="Normalise forecast errors by a baseline (default: none)",
)
def run_all(config_path, **kwargs):
    """Simulate, infer, forecast and report in one go."""
    config = load_config(config_path, **kwargs)
    store = _open_store(config)
    metrics = _metrics(config)
    _simulate(config, store, metrics)
    specs = build_spec_matrix(config.grid)
    failed = _sweep(config, store, specs, Stage.FULL, metrics)
    _write_metrics(store, metrics)
    failed += _report(config, store, [])
    if failed:
        sys.exit(1)


def main() -> None:
    cli()

