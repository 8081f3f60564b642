"""
Command line interface for inspecting checkpoints.

Provides the 'inspect' command for the mtlfno CLI tool.
"""

import logging
from pathlib import Path
from typing import Optional

import typer
from rich import print
from rich.console import Console
from rich.table import Table

from mtlfno import mtlfno_app
from mtlfno.console import handle_errors
from mtlfno.controller.evaluator import UNITARITY_TOLERANCE, check_unitarity, unitarity_report
from mtlfno.controller.runner import find_checkpoints, write_json
from mtlfno.local.checkpoint import load_checkpoint
from mtlfno.model.metrics import UnitarityReport

logger = logging.getLogger(__name__)


def print_unitarity_table(report: UnitarityReport, title: str) -> None:
    table = Table(title=f"{title}: {report.factor} ({report.variant})")
    for column in ("Layer", "Task", "Mean max σ", "Mean min σ", "‖UᴴU − I‖"):
        table.add_column(column, justify="left" if column == "Task" else "right")
    for entry in report.entries:
        table.add_row(
            str(entry.layer),
            entry.task,
            f"{entry.mean_max_sv:.10f}",
            f"{entry.mean_min_sv:.10f}",
            f"{entry.residual:.3e}",
        )
    print(table)
    if report.note:
        print(f"[yellow]⚠️  {report.note}[/yellow]")

    partition = Table(title="Parameter Partition")
    partition.add_column("Group")
    partition.add_column("Params", justify="right")
    partition.add_row("shared", f"{report.shared_params:,}")
    for index, count in enumerate(report.per_task_params):
        partition.add_row(f"task {index}", f"{count:,}")
    partition.add_row("[bold]total[/bold]", f"[bold]{report.params:,}[/bold]")
    print(partition)


@mtlfno_app.command("inspect")
def inspect_checkpoint(
    checkpoint: Path = typer.Argument(
        ...,
        help="MTLF checkpoint file, or a run directory holding one or more",
    ),
    out: Optional[Path] = typer.Option(
        None,
        "--out",
        "-o",
        help="Also write the report to this JSON file",
    ),
):
    """
    Report singular-value statistics of every layer's spectral factor.

    For the full variant the Cayley factor of each task is checked against
    unitarity (mean max/min singular values should sit at 1). Other variants
    report their unconstrained factor with a note. A full-variant deviation
    beyond 1e-6 exits with code 3. The shared and per-task
    parameter partition is printed as well.

    Args:
        checkpoint (Path): Checkpoint file or run directory.
        out (Optional[Path]): Optional JSON output file.
    """
    with handle_errors():
        paths = find_checkpoints(checkpoint)
        reports = {}
        with Console().status("[bold cyan]Inspecting spectral weights...[/bold cyan]"):
            for path in paths:
                reports[path.name] = unitarity_report(load_checkpoint(path))

    for name, report in reports.items():
        print_unitarity_table(report, name)
        if report.note:
            continue
        if report.max_deviation <= UNITARITY_TOLERANCE:
            print(f"✅ Max deviation of the singular values from 1: {report.max_deviation:.3e}")
        else:
            print(f"❌ Max deviation of the singular values from 1: {report.max_deviation:.3e}")
    if out is not None:
        write_json({name: report.to_dict() for name, report in reports.items()}, out)
        print(f"📝 Report written to {out}")
    with handle_errors():
        for report in reports.values():
            check_unitarity(report)
