"""
Reproducible runs: training, evaluation and sweeps on top of a dataset.

A run lives in ``<out>/<timestamp>_seed<seed>/`` and holds the checkpoint(s),
``manifest.json``, ``metrics.json`` and ``losses.csv``; sweeps write
``sweep.csv``.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Optional, Sequence

from pydantic import ValidationError
from rich import print
from rich.console import Console
from rich.table import Table
from tqdm import tqdm

from mtlfno import project
from mtlfno.core.errors import CheckpointError, ConfigError, ContractError
from mtlfno.core.seeding import RNG_NAME, seed_streams
from mtlfno.controller.evaluator import build_report
from mtlfno.controller.network import ModelState, init_state
from mtlfno.controller.trainer import train
from mtlfno.local.checkpoint import load_checkpoint, save_checkpoint
from mtlfno.model.config import ModelConfig, ModelVariant
from mtlfno.model.dataset import FieldDataset, TaskDataset
from mtlfno.model.metrics import MetricsReport, TrainHistory
from mtlfno.model.run import ReportFormat, RunSpec, SweepAxis, TrainMode

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["Task", "Params", "GFLOPs", "Inference ms", "MSE", "MAE", "R²"]
SWEEP_COLUMNS = ["axis", "setting", "seed", "task", "r2", "mse", "mae", "params"]


@dataclass
class FitResult:
    """
    Trained models of one run.

    Attributes:
        states (list[ModelState]): One state (mtl) or one per task (independent).
        histories (list[TrainHistory]): Loss history of each state.
        report (MetricsReport): Combined test metrics over every task.
    """

    states: list[ModelState]
    histories: list[TrainHistory]
    report: MetricsReport


@dataclass
class RunOutcome:
    run_dir: Path
    fit: FitResult
    checkpoints: list[Path] = field(default_factory=list)


@dataclass
class SweepRow:
    axis: str
    setting: int
    seed: int
    task: str
    r2: Optional[float]
    mse: float
    mae: float
    params: int

    def as_row(self) -> list[Any]:
        r2 = "" if self.r2 is None else repr(self.r2)
        return [self.axis, self.setting, self.seed, self.task, r2, repr(self.mse), repr(self.mae), self.params]


def reconcile_config(model: ModelConfig, data: FieldDataset, **updates: Any) -> ModelConfig:
    """Take grid, sensor and task extents from ``data``; apply ``updates`` on top."""
    height, width = data.grid
    values = model.model_dump()
    values.update(grid_h=height, grid_w=width, n_sensors=data.n_sensors, n_tasks=len(data.tasks))
    values.update(updates)
    try:
        return ModelConfig.model_validate(values)
    except ValidationError as exc:
        raise ConfigError(f"model config does not fit the dataset: {exc}") from exc


def select_training(data: FieldDataset, train_size: Optional[int], seed: int) -> list[TaskDataset]:
    """
    Restrict every task to ``train_size`` training samples.

    The retained samples are a prefix of one seeded permutation, so smaller
    sizes are subsets of larger ones for the same seed.
    """
    if train_size is None:
        return list(data.tasks)
    limit = min(task.n_train for task in data.tasks)
    if train_size > limit:
        raise ConfigError(f"train size {train_size} exceeds the {limit} training samples available")
    order = seed_streams(seed).shuffle.permutation(limit)
    return [task.subset(train_size, order) for task in data.tasks]


def merge_reports(reports: Sequence[MetricsReport], variant: str) -> MetricsReport:
    """Combine single-task reports of independently trained models."""
    return MetricsReport(
        variant=variant,
        tasks=[metrics for report in reports for metrics in report.tasks],
        params=sum(report.params for report in reports),
        shared_params=0,
        per_task_params=[report.params for report in reports],
        gflops=sum(report.gflops for report in reports),
        inference_ms=sum(report.inference_ms for report in reports) / len(reports),
    )


def fit(spec: RunSpec, data: FieldDataset, show_progress: bool = True) -> FitResult:
    """Train and evaluate according to ``spec`` without touching the filesystem."""
    tasks = select_training(data, spec.train_size, spec.train.seed)
    if spec.mode is TrainMode.MTL:
        config = reconcile_config(spec.model, data)
        state = init_state(config, seed_streams(spec.train.seed).init, data.task_names)
        result = train(state, tasks, spec.train, show_progress)
        report = build_report(result.state, tasks, repeats=spec.inference_repeats)
        return FitResult([result.state], [result.history], report)

    single = spec.train.model_copy(update={"task_weights": None})
    states, histories, reports = [], [], []
    for task in tasks:
        config = reconcile_config(spec.model, data, n_tasks=1, variant=ModelVariant.NOSHARE)
        state = init_state(config, seed_streams(spec.train.seed).init, [task.name])
        result = train(state, [task], single, show_progress)
        states.append(result.state)
        histories.append(result.history)
        reports.append(build_report(result.state, [task], repeats=spec.inference_repeats))
    return FitResult(states, histories, merge_reports(reports, "independent"))


def make_run_dir(out: Path, seed: int) -> Path:
    timestamp = datetime.now().strftime("%Y_%m_%d_%H_%M_%S")
    run_dir = Path(out) / f"{timestamp}_seed{seed}"
    suffix = 1
    while run_dir.exists():
        run_dir = Path(out) / f"{timestamp}_seed{seed}_{suffix}"
        suffix += 1
    run_dir.mkdir(parents=True)
    return run_dir


def write_json(payload: Any, path: Path) -> None:
    with Path(path).open("w", encoding="utf-8") as file:
        json.dump(payload, file, indent=2, sort_keys=True, default=str)
        file.write("\n")


def write_losses_csv(histories: Sequence[TrainHistory], path: Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(["epoch", "task", "loss"])
        for history in histories:
            for epoch, task, loss in history.to_rows():
                writer.writerow([epoch, task, repr(loss)])


def write_sweep_csv(rows: Sequence[SweepRow], path: Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow(row.as_row())


def checkpoint_name(state: ModelState, mode: TrainMode) -> str:
    if mode is TrainMode.INDEPENDENT:
        return f"checkpoint_{state.task_names[0]}.mtlf"
    return "checkpoint.mtlf"


def train_run(
    spec: RunSpec,
    data: FieldDataset,
    dataset_path: Optional[Path] = None,
    show_progress: bool = True,
) -> RunOutcome:
    """
    Train per ``spec`` and write every run artifact.

    Returns:
        RunOutcome: The run directory, trained models and checkpoint paths.
    """
    run_dir = make_run_dir(spec.out, spec.train.seed)
    logger.info(f"Starting {spec.mode} run in {run_dir}")
    started = time.perf_counter()
    result = fit(spec, data, show_progress)
    elapsed = time.perf_counter() - started

    checkpoints = [
        save_checkpoint(state, run_dir / checkpoint_name(state, spec.mode)) for state in result.states
    ]
    manifest = {
        "created": datetime.now().isoformat(timespec="seconds"),
        "mtlfno_version": project.version,
        "run_spec": spec.model_dump(mode="json"),
        "mode": str(spec.mode),
        "variant": str(spec.variant) if spec.mode is TrainMode.MTL else str(ModelVariant.NOSHARE),
        "seed": spec.train.seed,
        "seed_streams": ["init", "shuffle", "generator"],
        "rng": RNG_NAME,
        "dataset": {
            "path": str(dataset_path) if dataset_path else None,
            "seed": data.seed,
            "rng": data.rng,
            "tasks": data.task_names,
        },
        "params": {
            "total": result.report.params,
            "shared": result.report.shared_params,
            "per_task": result.report.per_task_params,
        },
        "history": [
            [asdict(record) for record in history.epochs] for history in result.histories
        ],
        "metrics": result.report.to_dict(),
        "checkpoints": [path.name for path in checkpoints],
        "timings": {"train_and_eval_s": elapsed},
    }
    write_json(manifest, run_dir / "manifest.json")
    if ReportFormat.JSON in spec.reports:
        write_json(result.report.to_dict(), run_dir / "metrics.json")
    if ReportFormat.CSV in spec.reports:
        write_losses_csv(result.histories, run_dir / "losses.csv")
    logger.info(f"Run finished in {elapsed:.1f}s: {run_dir}")
    return RunOutcome(run_dir, result, checkpoints)


def find_checkpoints(path: Path) -> list[Path]:
    """A checkpoint file itself, or every ``*.mtlf`` inside a run directory."""
    path = Path(path)
    if path.is_dir():
        found = sorted(path.glob("*.mtlf"))
        if not found:
            raise CheckpointError(f"no checkpoint in {path}")
        return found
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    return [path]


def evaluate_checkpoints(
    paths: Sequence[Path], data: FieldDataset, split: str = "test", repeats: int = 20
) -> MetricsReport:
    """
    Evaluate one multi-task checkpoint or several single-task ones.

    Tasks are matched to the dataset by the names stored in each checkpoint.

    Raises:
        ConfigError: If a checkpoint does not fit the dataset.
    """
    reports = []
    for path in paths:
        state = load_checkpoint(path)
        try:
            tasks = [data.task(name) for name in state.task_names]
        except ContractError as exc:
            raise ConfigError(f"{path} does not match the dataset: {exc}") from exc
        cfg = state.config
        if (cfg.grid_h, cfg.grid_w) != data.grid or cfg.n_sensors != data.n_sensors:
            raise ConfigError(
                f"{path} expects a {cfg.grid_h}x{cfg.grid_w} grid with {cfg.n_sensors} sensors, "
                f"dataset has {data.grid[0]}x{data.grid[1]} with {data.n_sensors}"
            )
        reports.append(build_report(state, tasks, split, repeats))
    if len(reports) == 1:
        return reports[0]
    return merge_reports(reports, "independent")


def run_sweep(
    spec: RunSpec,
    data: FieldDataset,
    axis: SweepAxis,
    values: Sequence[int],
    seeds: Sequence[int],
    show_progress: bool = True,
) -> list[SweepRow]:
    """
    Train and evaluate once per ``(value, seed)``, sequentially in that order.

    Raises:
        ConfigError: If a train size exceeds the dataset.
    """
    if axis is SweepAxis.TRAIN_SIZE:
        limit = min(task.n_train for task in data.tasks)
        too_large = [v for v in values if v > limit]
        if too_large:
            raise ConfigError(f"train sizes {too_large} exceed the {limit} training samples available")
    settings = [(value, seed) for value in values for seed in seeds]
    rows: list[SweepRow] = []
    iterator: Any = tqdm(settings, unit="run", desc=f"Sweeping {axis}") if show_progress else settings
    for value, seed in iterator:
        if axis is SweepAxis.RANK:
            setting_spec = spec.with_overrides(rank=value, seed=seed)
        else:
            setting_spec = spec.with_overrides(train_size=value, seed=seed)
        result = fit(setting_spec, data, show_progress=False)
        for metrics in result.report.tasks:
            rows.append(
                SweepRow(str(axis), value, seed, metrics.task, metrics.r2, metrics.mse, metrics.mae, result.report.params)
            )
        logger.info(f"Sweep {axis}={value} seed={seed}: mean r2={result.report.mean_r2}")
    return rows


def _fmt(value: Optional[float], digits: int = 4) -> str:
    return "n/a" if value is None else f"{value:.{digits}g}"


def print_report_table(report: MetricsReport, title: str = "Results") -> None:
    """Print the per-task metrics with the Params/GFLOPs/timing columns."""
    with Console().status("[bold cyan]Generating Results Table...[/bold cyan]"):
        table = Table(title=f"{title} ({report.variant})")
        for column in REPORT_COLUMNS:
            table.add_column(column, justify="left" if column == "Task" else "right")
        params = f"{report.params / 1e6:.4f}M"
        for metrics in report.tasks:
            r2 = _fmt(metrics.r2) + (" (undefined)" if metrics.r2_undefined else "")
            table.add_row(
                metrics.task,
                params,
                f"{report.gflops:.3f}",
                f"{report.inference_ms:.2f}",
                _fmt(metrics.mse),
                _fmt(metrics.mae),
                r2,
            )
    print(table)
