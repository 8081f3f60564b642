"""
Command line interface for training MTL-FNO models.

Provides the 'train' command for the mtlfno CLI tool.
"""

import logging
from pathlib import Path
from typing import Optional

import typer
from rich import print

from mtlfno import mtlfno_app
from mtlfno.console import handle_errors
from mtlfno.controller.runner import print_report_table, train_run
from mtlfno.local.external import open_dataset
from mtlfno.model.config import AmplitudeMode, ModelVariant
from mtlfno.model.run import ReportFormat, RunSpec, TrainMode, load_json_model

logger = logging.getLogger(__name__)


def resolve_run_spec(config: Optional[Path], **overrides) -> RunSpec:
    """Load ``config`` (or the defaults) and apply the command-line overrides."""
    spec = load_json_model(RunSpec, config) if config is not None else RunSpec()
    return spec.with_overrides(**overrides)


@mtlfno_app.command()
def train(
    config: Optional[Path] = typer.Option(
        None,
        "--config",
        "-c",
        help="Run config JSON (model, train, mode, reports)",
        envvar="MTLFNO_CONFIG",
    ),
    dataset: Optional[Path] = typer.Option(
        None,
        "--dataset",
        "-d",
        help="Dataset directory written by 'gen'",
        envvar="MTLFNO_DATASET",
    ),
    layout: Optional[Path] = typer.Option(
        None,
        "--layout",
        help="Layout descriptor JSON when the dataset is an external grid",
        envvar="MTLFNO_LAYOUT",
    ),
    out: Optional[Path] = typer.Option(
        None,
        "--out",
        "-o",
        help="Parent directory of the run directories",
        envvar="MTLFNO_OUT",
    ),
    variant: Optional[ModelVariant] = typer.Option(
        None,
        "--variant",
        help="Spectral-weight variant",
        envvar="MTLFNO_VARIANT",
    ),
    mode: Optional[TrainMode] = typer.Option(
        None,
        "--mode",
        help="Train one multi-task model, or one vanilla FNO per task",
        envvar="MTLFNO_MODE",
    ),
    epochs: Optional[int] = typer.Option(None, "--epochs", help="Training epochs", envvar="MTLFNO_EPOCHS"),
    rank: Optional[int] = typer.Option(None, "--rank", help="CP rank of the task deltas", envvar="MTLFNO_RANK"),
    train_size: Optional[int] = typer.Option(
        None,
        "--train-size",
        help="Training samples per task (a seeded subset of the training split)",
        envvar="MTLFNO_TRAIN_SIZE",
    ),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed", envvar="MTLFNO_SEED"),
    amplitude: Optional[AmplitudeMode] = typer.Option(
        None,
        "--amplitude",
        help="Amplitude activation",
        envvar="MTLFNO_AMPLITUDE",
    ),
    progress: bool = typer.Option(
        True,
        "--progress/--no-progress",
        help="Show the epoch progress bar",
    ),
):
    """
    Train an MTL-FNO (or the independent baselines) on a dataset.

    Writes the checkpoint(s), manifest.json, metrics.json and losses.csv
    into a new run directory named by timestamp and seed, then prints the
    test metrics table.

    Args:
        config (Optional[Path]): Run config; flags given here override it.
        dataset (Optional[Path]): Dataset directory.
        layout (Optional[Path]): External grid layout descriptor.
        out (Optional[Path]): Parent directory of the run directory.
        variant (Optional[ModelVariant]): full, noshare, nopolar or nocayley.
        mode (Optional[TrainMode]): mtl or independent.
        epochs (Optional[int]): Number of epochs.
        rank (Optional[int]): CP rank.
        train_size (Optional[int]): Training samples per task.
        seed (Optional[int]): Seed of the init, shuffle and generator streams.
        amplitude (Optional[AmplitudeMode]): softplus or raw.
        progress (bool): Whether to display the progress bar.
    """
    with handle_errors():
        spec = resolve_run_spec(
            config,
            dataset=dataset,
            out=out,
            variant=variant,
            mode=mode,
            epochs=epochs,
            rank=rank,
            train_size=train_size,
            seed=seed,
            amplitude=amplitude,
        )

        # Log parameters
        typer.echo("\n" + "─" * 50)
        typer.echo(f"📂 Dataset: {spec.dataset}")
        typer.echo(f"🧩 Variant: {spec.variant} ({spec.mode})")
        typer.echo(f"🔁 Epochs: {spec.train.epochs}, batch {spec.train.batch_size}, lr {spec.train.lr0}")
        typer.echo(f"📐 Rank: {spec.model.rank}, width {spec.model.width}, modes {spec.model.k1}x{spec.model.k2}")
        typer.echo(f"🔢 Train size: {spec.train_size if spec.train_size else 'all'}")
        typer.echo(f"🎲 Seed: {spec.train.seed}")
        typer.echo(f"📁 Output: {spec.out}")
        typer.echo("─" * 50 + "\n")

        data = open_dataset(spec.dataset, layout)
        outcome = train_run(spec, data, spec.dataset, show_progress=progress)

    if ReportFormat.TABLE in spec.reports:
        print_report_table(outcome.fit.report, title="Test Metrics")
    print(f"✅ [bold]Run written to[/bold] {outcome.run_dir}")
    for path in outcome.checkpoints:
        print(f"   💾 {path.name}")
