"""Command-line entry point: ``driftcast <subcommand> --config FILE [overrides]``."""

from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

import click

from .dataset import build_instances, build_window_instances
from .experiment import ConfigError, ExperimentError, load_config, load_streams, run_experiment, \
    with_overrides, write_dataset
from .ingest import FilterRules, SchemaError, filter_records, parse_ais_csv, write_ais_csv
from .synth import generate_fleet


def _csv_list(kind):
    def convert(ctx, param, value):
        if value is None:
            return None
        try:
            return [kind(v) for v in value.split(",") if v.strip()]
        except ValueError:
            raise click.BadParameter(f"expected a comma-separated list, got {value!r}") from None
    return convert


config_option = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                             help="YAML or JSON experiment configuration.")


def _load(config_path, **overrides):
    try:
        return with_overrides(load_config(config_path), **overrides)
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from exc


def experiment_options(f):
    options = [
        config_option,
        click.option("--output-dir", type=click.Path(file_okay=False), help="Where models and reports go."),
        click.option("--input", "input_csv", type=click.Path(exists=True, dir_okay=False),
                     help="AIS CSV to use instead of the synthetic fleet."),
        click.option("--intervals", callback=_csv_list(float), help="Comma-separated intervals in minutes."),
        click.option("--models", callback=_csv_list(str), help="Comma-separated grid ids to keep."),
        click.option("--epochs", type=click.IntRange(min=1), help="Epoch count for every MLP in the grid."),
        click.option("--workers", type=click.IntRange(min=1), help="Parallel training jobs."),
        click.option("--seed", type=int, help="Synthetic fleet seed."),
        click.option("--k", type=click.IntRange(min=2), help="Cross-validation folds."),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _run(stages, **kw):
    cfg = _load(**kw)
    try:
        result = run_experiment(cfg, stages)
    except ExperimentError as exc:
        raise click.ClickException(str(exc)) from exc
    m = result.manifest
    click.echo(f"wrote {len(m['models'])} model files and {len(m['reports'])} reports to {result.output_dir}")
    for report in m["reports"]:
        click.echo(Path(result.output_dir, report["files"]["txt"]["path"]).read_text(), nl=False)


@click.group()
def main():
    """Vessel position forecasting from AIS reports."""


@main.command()
@config_option
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output AIS CSV.")
@click.option("--vessels", type=click.IntRange(min=1))
@click.option("--duration-min", type=click.FloatRange(min=0, min_open=True))
@click.option("--seed", type=int)
@click.option("--noise-m", type=click.FloatRange(min=0))
def synth(config_path, out, vessels, duration_min, seed, noise_m):
    """Generate a synthetic fleet as an AIS CSV."""
    fleet = _load(config_path).fleet
    changes = {k: v for k, v in dict(n_vessels=vessels, duration_min=duration_min, seed=seed,
                                      position_noise_m=noise_m).items() if v is not None}
    records = generate_fleet(replace(fleet, **changes))
    with open(out, "w", newline="") as fh:
        write_ais_csv(records, fh)
    click.echo(f"wrote {len(records)} records for {fleet.n_vessels if vessels is None else vessels} vessels")


@main.command()
@config_option
@click.option("--input", "input_csv", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Cleaned AIS CSV.")
@click.option("--no-box", is_flag=True, help="Skip the bounding-box filter.")
def ingest(config_path, input_csv, out, no_box):
    """Parse and filter a raw AIS CSV."""
    cfg = _load(config_path)
    try:
        with open(input_csv, "rb") as fh:
            parsed = parse_ais_csv(fh)
    except SchemaError as exc:
        raise click.ClickException(str(exc)) from exc
    kept, dropped = filter_records(parsed.records, FilterRules(bounding_box=None if no_box else cfg.bounding_box))
    with open(out, "w", newline="") as fh:
        write_ais_csv(kept, fh)
    click.echo(f"kept {len(kept)} records, {len(parsed.errors)} unparseable lines")
    for reason, n in sorted(dropped.items()):
        click.echo(f"  dropped {n}: {reason}")
    for err in parsed.errors[:10]:
        click.echo(f"  line {err.line}: {err.reason}", err=True)


@main.command()
@config_option
@click.option("--input", "input_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--interval", type=click.FloatRange(min=0, min_open=True), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--window", type=click.IntRange(min=0), default=0, show_default=True,
              help="Reports per window; 0 builds point instances.")
def dataset(config_path, input_csv, interval, out, window):
    """Build a supervised dataset for one prediction interval."""
    cfg = _load(config_path, input_csv=input_csv)
    streams = load_streams(cfg)
    if window:
        d = build_window_instances(streams, interval, cfg.tolerance_s, window)
    else:
        d = build_instances(streams, interval, cfg.tolerance_s)
    write_dataset(d, out)
    click.echo(f"wrote {len(d)} instances ({d.provenance})")


@main.command()
@experiment_options
def train(**kw):
    """Train the model grid and save one model file per (model, interval)."""
    _run(("train",), **kw)


@main.command()
@experiment_options
def cv(**kw):
    """Cross-validate the model grid on the full dataset of each interval."""
    _run(("cv",), **kw)


@main.command()
@experiment_options
def compare(**kw):
    """Train the grid and compare it with dead reckoning on the held-out split."""
    _run(("train", "compare"), **kw)


@main.command()
@experiment_options
def run(**kw):
    """Run every stage: train, cross-validate, compare."""
    _run(("train", "cv", "compare"), **kw)


@main.command()
@config_option
@click.option("--models", "model_dir", type=click.Path(exists=True), required=True,
              help="Directory of model files, one per interval.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(config_path, model_dir, host, port):
    """Serve forecasts over HTTP."""
    import uvicorn

    from .serve import RegistryError, create_app, load_registry

    cfg = _load(config_path)
    try:
        reg = load_registry(model_dir, cfg.earth)
    except RegistryError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"loaded intervals {', '.join(f'{i:g}' for i in reg.intervals)}", err=True)
    uvicorn.run(create_app(reg), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    sys.exit(main())
