"""
Result records for training and evaluation.

Plain dataclasses, serialized by the runner into ``metrics.json``,
``manifest.json`` and the CSV reports.
"""

from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional


class ParamCount(NamedTuple):
    """Trainable real scalars (complex entries count twice)."""

    total: int
    shared: int
    per_task: list[int]


@dataclass
class TaskMetrics:
    """
    Pooled regression metrics of one task, in field units.

    Attributes:
        task (str): Task name.
        mse (float): Mean squared residual over every test grid point.
        mae (float): Mean absolute residual over every test grid point.
        r2 (Optional[float]): Coefficient of determination; ``None`` when the
            targets have zero variance.
        r2_undefined (bool): Set when ``r2`` could not be computed.
        n_samples (int): Number of evaluated samples.
    """

    task: str
    mse: float
    mae: float
    r2: Optional[float]
    r2_undefined: bool = False
    n_samples: int = 0


@dataclass
class MetricsReport:
    """
    Evaluation summary of one trained model.

    Attributes:
        variant (str): Spectral-weight variant of the model.
        tasks (list[TaskMetrics]): Per-task metrics.
        params (int): Total trainable scalars.
        shared_params (int): Scalars shared by every task.
        per_task_params (list[int]): Task-specific scalars per task.
        gflops (float): Heuristic forward cost per sample.
        inference_ms (float): Median wall-clock time of one single-sample forward.
    """

    variant: str
    tasks: list[TaskMetrics] = field(default_factory=list)
    params: int = 0
    shared_params: int = 0
    per_task_params: list[int] = field(default_factory=list)
    gflops: float = 0.0
    inference_ms: float = 0.0

    @property
    def mean_r2(self) -> Optional[float]:
        values = [m.r2 for m in self.tasks if m.r2 is not None]
        return sum(values) / len(values) if values else None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    """
    Losses of one training epoch.

    Attributes:
        epoch (int): Zero-based epoch index.
        lr (float): Learning rate used during the epoch.
        task_losses (dict[str, float]): Mean per-task loss over the epoch's steps.
        total (float): Mean weighted total loss over the epoch's steps.
    """

    epoch: int
    lr: float
    task_losses: dict[str, float]
    total: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.epochs)

    def task_curve(self, task: str) -> list[float]:
        return [record.task_losses[task] for record in self.epochs]

    def to_rows(self) -> list[tuple[int, str, float]]:
        """``(epoch, task, loss)`` rows, one per task per epoch."""
        return [
            (record.epoch, task, loss)
            for record in self.epochs
            for task, loss in record.task_losses.items()
        ]


@dataclass
class SliceStats:
    """
    Singular-value statistics of one layer's spectral factor for one task.

    Attributes:
        layer (int): Fourier layer index.
        task (str): Task name.
        mean_max_sv (float): Mean over mode slices of the largest singular value.
        mean_min_sv (float): Mean over mode slices of the smallest singular value.
        residual (float): Largest ``||U^H U - I||_F`` over the slices.
    """

    layer: int
    task: str
    mean_max_sv: float
    mean_min_sv: float
    residual: float


@dataclass
class UnitarityReport:
    """
    Per-layer, per-task unitarity diagnostics of a model.

    ``note`` is empty for the full variant, whose factor is unitary by
    construction; other variants report raw statistics with a label.
    """

    variant: str
    factor: str
    note: str
    entries: list[SliceStats] = field(default_factory=list)
    params: int = 0
    shared_params: int = 0
    per_task_params: list[int] = field(default_factory=list)

    @property
    def max_deviation(self) -> float:
        """Largest distance of any mean singular value from 1."""
        return max(
            (max(abs(e.mean_max_sv - 1.0), abs(e.mean_min_sv - 1.0)) for e in self.entries),
            default=0.0,
        )

    def to_dict(self) -> dict:
        return asdict(self)
