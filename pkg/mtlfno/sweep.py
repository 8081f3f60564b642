"""
Command line interface for rank and training-size sweeps.

Provides the 'sweep' command for the mtlfno CLI tool.
"""

import logging
from pathlib import Path
from typing import List, Optional

import typer
from rich import print
from rich.table import Table

from mtlfno import mtlfno_app
from mtlfno.console import handle_errors
from mtlfno.controller.runner import SweepRow, make_run_dir, run_sweep, write_json, write_sweep_csv
from mtlfno.local.external import open_dataset
from mtlfno.model.run import SweepAxis
from mtlfno.train import resolve_run_spec

logger = logging.getLogger(__name__)

DEFAULT_VALUES = {
    SweepAxis.RANK: [1, 4, 8, 16],
    SweepAxis.TRAIN_SIZE: [30, 50, 80, 100],
}


def print_sweep_summary(rows: List[SweepRow], axis: SweepAxis) -> None:
    """Mean R² per setting, averaged over seeds and tasks."""
    settings: dict[int, list[float]] = {}
    for row in rows:
        bucket = settings.setdefault(row.setting, [])
        if row.r2 is not None:
            bucket.append(row.r2)
    table = Table(title=f"Sweep over {axis}")
    table.add_column(str(axis), justify="right")
    table.add_column("Mean R²", justify="right")
    for setting, values in settings.items():
        mean = f"{sum(values) / len(values):.4f}" if values else "n/a"
        table.add_row(str(setting), mean)
    print(table)


@mtlfno_app.command()
def sweep(
    axis: SweepAxis = typer.Option(SweepAxis.RANK, "--axis", help="Swept quantity"),
    values: Optional[List[int]] = typer.Option(
        None,
        "--values",
        "-v",
        help="Settings to sweep (can be repeated: -v 1 -v 8). Defaults depend on the axis",
    ),
    seeds: Optional[List[int]] = typer.Option(
        None,
        "--seeds",
        "-s",
        help="Seeds each setting is repeated over (can be repeated). Defaults to the config seed",
    ),
    config: Optional[Path] = typer.Option(
        None,
        "--config",
        "-c",
        help="Run config JSON shared by every setting",
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
        help="Parent directory of the sweep run directory",
        envvar="MTLFNO_OUT",
    ),
    epochs: Optional[int] = typer.Option(None, "--epochs", help="Training epochs", envvar="MTLFNO_EPOCHS"),
    progress: bool = typer.Option(
        True,
        "--progress/--no-progress",
        help="Show the sweep progress bar",
    ),
):
    """
    Train and evaluate once per (setting, seed) and collect R² per task.

    Settings run sequentially in the given order. For the train_size axis
    every size uses a prefix of the same seeded permutation, so smaller
    training sets are subsets of larger ones. Results go to sweep.csv in a
    new run directory.

    Args:
        axis (SweepAxis): rank or train_size.
        values (Optional[List[int]]): Settings along the axis.
        seeds (Optional[List[int]]): Seeds per setting.
        config (Optional[Path]): Run config.
        dataset (Optional[Path]): Dataset directory.
        layout (Optional[Path]): External grid layout descriptor.
        out (Optional[Path]): Parent directory of the sweep directory.
        epochs (Optional[int]): Epochs per run.
        progress (bool): Whether to display the progress bar.
    """
    with handle_errors():
        spec = resolve_run_spec(config, dataset=dataset, out=out, epochs=epochs)
        values = list(values) if values else DEFAULT_VALUES[axis]
        seeds = list(seeds) if seeds else [spec.train.seed]

        # Log parameters
        typer.echo("\n" + "─" * 50)
        typer.echo(f"📂 Dataset: {spec.dataset}")
        typer.echo(f"📈 Axis: {axis} = {', '.join(str(v) for v in values)}")
        typer.echo(f"🎲 Seeds: {', '.join(str(s) for s in seeds)}")
        typer.echo(f"🧩 Variant: {spec.variant}, {spec.train.epochs} epochs")
        typer.echo("─" * 50 + "\n")

        data = open_dataset(spec.dataset, layout)
        rows = run_sweep(spec, data, axis, values, seeds, show_progress=progress)
        run_dir = make_run_dir(spec.out, seeds[0])
        write_sweep_csv(rows, run_dir / "sweep.csv")
        write_json(
            {"axis": str(axis), "values": values, "seeds": seeds, "run_spec": spec.model_dump(mode="json")},
            run_dir / "manifest.json",
        )

    print_sweep_summary(rows, axis)
    print(f"✅ [bold]Sweep written to[/bold] {run_dir / 'sweep.csv'}")
