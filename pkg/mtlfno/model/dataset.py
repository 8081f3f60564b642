"""
Dataset models.

``SyntheticSpec`` and ``ExternalLayout`` are pydantic schemas read from JSON
files; the in-memory records (``FieldSample``, ``TaskDataset``,
``FieldDataset``, ``NormStats``) are dataclasses holding float64 arrays.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Iterator, Literal, Optional

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from mtlfno.core.errors import ContractError, ShapeError

logger = logging.getLogger(__name__)

# Five well-separated Gaussian sources on the unit square
DEFAULT_SOURCES: list[tuple[float, float]] = [
    (0.25, 0.25),
    (0.75, 0.25),
    (0.50, 0.50),
    (0.25, 0.75),
    (0.75, 0.75),
]

DEFAULT_SENSORS: list[tuple[float, float]] = [
    (0.20, 0.40),
    (0.40, 0.80),
    (0.60, 0.20),
    (0.80, 0.60),
]


class TaskKind(StrEnum):
    """Field derived from the shared Gaussian potential."""

    POTENTIAL = "potential"
    GRAD_X = "grad_x"
    GRAD_Y = "grad_y"
    SQUARED = "squared"


class SyntheticSpec(BaseModel):
    """
    Pydantic schema of a synthetic multi-task dataset.

    Coordinates are fractions of the unit square: a grid point ``(h, w)``
    sits at ``x = w / (W - 1)``, ``y = h / (H - 1)``, and a sensor at
    ``(x, y)`` reads the nearest grid point.

    Attributes:
        grid_h (int): Grid rows.
        grid_w (int): Grid columns.
        sources (list[tuple[float, float]]): Source centers ``(x, y)``; ``J`` is their count.
        sigma (float): Gaussian width.
        amplitude_min (float): Lower bound of the amplitude draw.
        amplitude_max (float): Upper bound of the amplitude draw.
        tasks (list[TaskKind]): Fields to generate, one task each.
        sensors (list[list[tuple[float, float]]]): Sensor locations per task.
        n_train (int): Training samples per task.
        n_test (int): Test samples per task.
        seed (int): Master seed of the generator stream.
        sensor_noise (float): Standard deviation of Gaussian noise added to
            sensor readings only.
    """

    model_config = ConfigDict(extra="forbid")

    grid_h: int = Field(64, ge=2)
    grid_w: int = Field(64, ge=2)
    sources: list[tuple[float, float]] = Field(default_factory=lambda: list(DEFAULT_SOURCES))
    sigma: float = 0.12
    amplitude_min: float = 0.5
    amplitude_max: float = 2.0
    tasks: list[TaskKind] = Field(default_factory=lambda: list(TaskKind))
    sensors: list[list[tuple[float, float]]] = Field(
        default_factory=lambda: [list(DEFAULT_SENSORS) for _ in TaskKind]
    )
    n_train: int = Field(100, ge=1)
    n_test: int = Field(20, ge=1)
    seed: int = 0
    sensor_noise: float = Field(0.0, ge=0.0)

    @field_validator("sources")
    @classmethod
    def _check_sources(cls, value: list[tuple[float, float]]) -> list[tuple[float, float]]:
        if len(value) < 1:
            raise ValueError("at least one source is required (J >= 1)")
        return value

    @field_validator("sigma")
    @classmethod
    def _check_sigma(cls, value: float) -> float:
        if value <= 0:
            raise ValueError(f"sigma must be positive, got {value}")
        return value

    @model_validator(mode="after")
    def _check_layout(self) -> "SyntheticSpec":
        if self.amplitude_min > self.amplitude_max:
            raise ValueError("amplitude_min exceeds amplitude_max")
        if not self.tasks:
            raise ValueError("at least one task is required")
        if len(set(self.tasks)) != len(self.tasks):
            raise ValueError(f"duplicate tasks in {self.tasks}")
        if len(self.sensors) != len(self.tasks):
            raise ValueError(
                f"{len(self.sensors)} sensor lists given for {len(self.tasks)} tasks"
            )
        for task, locations in zip(self.tasks, self.sensors):
            if not locations:
                raise ValueError(f"task {task} has no sensors")
            for x, y in locations:
                if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                    raise ValueError(f"sensor ({x}, {y}) of task {task} is outside the unit square")
        return self

    def sensor_indices(self, task: int) -> list[tuple[int, int]]:
        """Nearest grid indices ``(h, w)`` of the sensors of ``task``."""
        return [
            (int(round(y * (self.grid_h - 1))), int(round(x * (self.grid_w - 1))))
            for x, y in self.sensors[task]
        ]


class ExternalTask(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    file: str
    n_train: int = Field(ge=1)
    n_test: int = Field(ge=0)
    sensor_indices: Optional[list[tuple[int, int]]] = None


class ExternalLayout(BaseModel):
    """
    Pydantic descriptor of externally produced grid files.

    Every record is ``[sensors (if stored)] [field, row-major] [extra values]``
    in the declared dtype and byte order, after ``header_bytes`` of header
    that is skipped. Training records come first, then test records.

    Attributes:
        grid_h (int): Field rows.
        grid_w (int): Field columns.
        sensor_indices (list[tuple[int, int]]): Default ``(h, w)`` sensor
            positions, overridable per task.
        dtype (str): ``"f4"`` or ``"f8"``.
        endianness (str): ``"little"`` or ``"big"``.
        header_bytes (int): Bytes to skip at the start of every file.
        sensor_values (str): ``"stored"`` when records carry their sensor
            readings, ``"from_field"`` to read them off the field.
        extra_per_record (int): Trailing values kept as condition parameters.
        tasks (list[ExternalTask]): One entry per task file.
    """

    model_config = ConfigDict(extra="forbid")

    grid_h: int = Field(ge=2)
    grid_w: int = Field(ge=2)
    sensor_indices: list[tuple[int, int]] = Field(default_factory=list)
    dtype: Literal["f4", "f8"] = "f8"
    endianness: Literal["little", "big"] = "little"
    header_bytes: int = Field(0, ge=0)
    sensor_values: Literal["stored", "from_field"] = "from_field"
    extra_per_record: int = Field(0, ge=0)
    tasks: list[ExternalTask] = Field(min_length=1)

    @property
    def numpy_dtype(self) -> np.dtype:
        return np.dtype(("<" if self.endianness == "little" else ">") + self.dtype)


@dataclass
class FieldSample:
    """
    One sensor-vector and ground-truth pair of one task.

    Attributes:
        sensors (NDArray): ``[n]`` sensor readings.
        field (NDArray): ``[H, W]`` ground-truth grid.
        task (int): Task index.
        conditions (NDArray): Generator inputs, kept for provenance.
    """

    sensors: NDArray[np.float64]
    field: NDArray[np.float64]
    task: int
    conditions: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class NormStats:
    """
    Z-score statistics of one task, computed on its training split.

    Attributes:
        field_mean (float): Mean over all training grid points.
        field_std (float): Standard deviation over all training grid points.
        sensor_mean (NDArray): ``[n]`` per-sensor means.
        sensor_std (NDArray): ``[n]`` per-sensor standard deviations.
    """

    field_mean: float
    field_std: float
    sensor_mean: NDArray[np.float64]
    sensor_std: NDArray[np.float64]

    @classmethod
    def from_training(cls, sensors: NDArray, fields: NDArray) -> "NormStats":
        field_std = float(fields.std())
        sensor_std = sensors.std(axis=0)
        # constant channels would divide by zero
        return cls(
            field_mean=float(fields.mean()),
            field_std=field_std if field_std > 0 else 1.0,
            sensor_mean=sensors.mean(axis=0),
            sensor_std=np.where(sensor_std > 0, sensor_std, 1.0),
        )

    def normalize_sensors(self, sensors: NDArray) -> NDArray[np.float64]:
        return (sensors - self.sensor_mean) / self.sensor_std

    def normalize_field(self, fields: NDArray) -> NDArray[np.float64]:
        return (fields - self.field_mean) / self.field_std

    def denormalize_field(self, fields: NDArray) -> NDArray[np.float64]:
        return fields * self.field_std + self.field_mean

    def to_dict(self) -> dict:
        return {
            "field_mean": self.field_mean,
            "field_std": self.field_std,
            "sensor_mean": self.sensor_mean.tolist(),
            "sensor_std": self.sensor_std.tolist(),
        }


@dataclass
class TaskDataset:
    """
    Train and test splits of one task, stored as stacked arrays.

    Attributes:
        name (str): Task name.
        sensor_indices (list[tuple[int, int]]): ``(h, w)`` sensor positions.
        train_sensors (NDArray): ``[N_train, n]``.
        train_fields (NDArray): ``[N_train, H, W]``.
        test_sensors (NDArray): ``[N_test, n]``.
        test_fields (NDArray): ``[N_test, H, W]``.
        train_conditions (NDArray): ``[N_train, J]`` provenance values.
        test_conditions (NDArray): ``[N_test, J]`` provenance values.
        stats (Optional[NormStats]): Training-split statistics, filled by the loaders.
    """

    name: str
    sensor_indices: list[tuple[int, int]]
    train_sensors: NDArray[np.float64]
    train_fields: NDArray[np.float64]
    test_sensors: NDArray[np.float64]
    test_fields: NDArray[np.float64]
    train_conditions: NDArray[np.float64] = field(default_factory=lambda: np.zeros((0, 0)))
    test_conditions: NDArray[np.float64] = field(default_factory=lambda: np.zeros((0, 0)))
    stats: Optional[NormStats] = None

    def __post_init__(self):
        for split in ("train", "test"):
            sensors = getattr(self, f"{split}_sensors")
            fields = getattr(self, f"{split}_fields")
            if sensors.ndim != 2 or fields.ndim != 3 or sensors.shape[0] != fields.shape[0]:
                raise ShapeError(
                    f"{self.name}: {split} sensors {sensors.shape} / fields {fields.shape} disagree"
                )
            if sensors.shape[1] != len(self.sensor_indices):
                raise ShapeError(f"{self.name}: sensor count differs from sensor_indices")
            conditions = getattr(self, f"{split}_conditions")
            if conditions.size == 0:
                setattr(self, f"{split}_conditions", np.zeros((sensors.shape[0], 0)))

    @property
    def n_train(self) -> int:
        return self.train_sensors.shape[0]

    @property
    def n_test(self) -> int:
        return self.test_sensors.shape[0]

    @property
    def n_sensors(self) -> int:
        return len(self.sensor_indices)

    @property
    def grid(self) -> tuple[int, int]:
        return self.train_fields.shape[1], self.train_fields.shape[2]

    def compute_stats(self) -> NormStats:
        self.stats = NormStats.from_training(self.train_sensors, self.train_fields)
        return self.stats

    def require_stats(self) -> NormStats:
        return self.stats if self.stats is not None else self.compute_stats()

    def normalized(self, split: str = "train") -> tuple[NDArray, NDArray]:
        """Z-scored ``(sensors, fields)`` of ``split`` under the training statistics."""
        stats = self.require_stats()
        sensors, fields = self.split(split)
        return stats.normalize_sensors(sensors), stats.normalize_field(fields)

    def split(self, split: str) -> tuple[NDArray, NDArray]:
        if split not in ("train", "test"):
            raise ContractError(f"unknown split {split!r}")
        return getattr(self, f"{split}_sensors"), getattr(self, f"{split}_fields")

    def samples(self, split: str = "train", task: int = 0) -> Iterator[FieldSample]:
        sensors, fields = self.split(split)
        conditions = getattr(self, f"{split}_conditions")
        for i in range(sensors.shape[0]):
            yield FieldSample(sensors[i], fields[i], task, conditions[i])

    def subset(self, n_train: int, order: Optional[NDArray[np.intp]] = None) -> "TaskDataset":
        """
        Restrict the training split to ``n_train`` samples.

        Samples are taken as a prefix of ``order`` (identity when omitted), so
        subsets drawn from one order are nested. Statistics are recomputed on
        the reduced training split.
        """
        if not 1 <= n_train <= self.n_train:
            raise ContractError(f"{self.name}: cannot take {n_train} of {self.n_train} training samples")
        keep = (np.arange(self.n_train) if order is None else np.asarray(order))[:n_train]
        reduced = TaskDataset(
            name=self.name,
            sensor_indices=list(self.sensor_indices),
            train_sensors=self.train_sensors[keep],
            train_fields=self.train_fields[keep],
            test_sensors=self.test_sensors,
            test_fields=self.test_fields,
            train_conditions=self.train_conditions[keep],
            test_conditions=self.test_conditions,
        )
        reduced.compute_stats()
        return reduced


@dataclass
class FieldDataset:
    """
    A multi-task dataset plus the provenance recorded in its manifest.

    Attributes:
        tasks (list[TaskDataset]): One entry per task, in task-index order.
        spec (Optional[dict]): Generator spec (synthetic datasets only).
        seed (Optional[int]): Master seed used to generate the data.
        rng (Optional[str]): Name of the random bit generator.
    """

    tasks: list[TaskDataset]
    spec: Optional[dict] = None
    seed: Optional[int] = None
    rng: Optional[str] = None

    def __post_init__(self):
        if not self.tasks:
            raise ContractError("a dataset needs at least one task")
        grids = {task.grid for task in self.tasks}
        if len(grids) != 1:
            raise ShapeError(f"tasks disagree on grid size: {sorted(grids)}")
        sensors = {task.n_sensors for task in self.tasks}
        if len(sensors) != 1:
            raise ShapeError(f"tasks disagree on sensor count: {sorted(sensors)}")

    @property
    def task_names(self) -> list[str]:
        return [task.name for task in self.tasks]

    @property
    def grid(self) -> tuple[int, int]:
        return self.tasks[0].grid

    @property
    def n_sensors(self) -> int:
        return self.tasks[0].n_sensors

    def task(self, name: str) -> TaskDataset:
        for task in self.tasks:
            if task.name == name:
                return task
        raise ContractError(f"dataset has no task {name!r}; available: {self.task_names}")

    def compute_stats(self) -> None:
        for task in self.tasks:
            task.compute_stats()
