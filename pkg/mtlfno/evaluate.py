"""
Command line interface for evaluating trained checkpoints.

Provides the 'eval' command for the mtlfno CLI tool.
"""

import json
import logging
from pathlib import Path
from typing import Optional

import typer
from rich import print
from rich.console import Console

from mtlfno import mtlfno_app
from mtlfno.console import handle_errors
from mtlfno.controller.runner import evaluate_checkpoints, find_checkpoints, print_report_table, write_json
from mtlfno.local.external import open_dataset
from mtlfno.model.run import DataSplit

logger = logging.getLogger(__name__)


@mtlfno_app.command("eval")
def eval_checkpoint(
    checkpoint: Path = typer.Argument(
        ...,
        help="MTLF checkpoint file, or a run directory holding one or more",
    ),
    dataset: Optional[Path] = typer.Option(
        None,
        "--dataset",
        "-d",
        help="Dataset directory to evaluate on",
        envvar="MTLFNO_DATASET",
    ),
    layout: Optional[Path] = typer.Option(
        None,
        "--layout",
        help="Layout descriptor JSON when the dataset is an external grid",
        envvar="MTLFNO_LAYOUT",
    ),
    split: DataSplit = typer.Option(DataSplit.TEST, "--split", help="Split to evaluate"),
    repeats: int = typer.Option(
        20,
        "--repeats",
        min=20,
        help="Timed forwards behind the median inference time",
    ),
    as_json: bool = typer.Option(
        False,
        "--json",
        help="Print the metrics report as JSON instead of a table",
    ),
    out: Optional[Path] = typer.Option(
        None,
        "--out",
        "-o",
        help="Also write the metrics report to this JSON file",
    ),
):
    """
    Evaluate checkpoint(s) on a dataset split.

    Reports per-task MSE, MAE and R² in field units, together with the
    parameter count, the GFLOPs estimate and the median single-sample
    inference time. Checkpoints are matched to dataset tasks by name.

    Args:
        checkpoint (Path): Checkpoint file or run directory.
        dataset (Optional[Path]): Dataset directory.
        layout (Optional[Path]): External grid layout descriptor.
        split (DataSplit): train or test.
        repeats (int): Timed forwards, at least 20.
        as_json (bool): Emit JSON on stdout.
        out (Optional[Path]): Optional JSON output file.
    """
    with handle_errors():
        paths = find_checkpoints(checkpoint)
        data = open_dataset(dataset, layout)
        if not as_json:
            typer.echo("\n" + "─" * 50)
            typer.echo(f"💾 Checkpoints: {', '.join(p.name for p in paths)}")
            typer.echo(f"📂 Dataset: {dataset} ({split})")
            typer.echo("─" * 50 + "\n")
        with Console(stderr=True).status("[bold cyan]Evaluating...[/bold cyan]"):
            report = evaluate_checkpoints(paths, data, str(split), repeats)

    if out is not None:
        write_json(report.to_dict(), out)
        logger.info(f"Wrote metrics to {out}")
    if as_json:
        typer.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        return
    print_report_table(report, title=f"{str(split).capitalize()} Metrics")
    if out is not None:
        print(f"📝 Metrics written to {out}")
