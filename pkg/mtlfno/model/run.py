"""
Run configuration.

A ``RunSpec`` is the single JSON document a run is described by; CLI flags
are applied on top of it with ``RunSpec.with_overrides``.
"""

import json
import logging
from enum import StrEnum
from pathlib import Path
from typing import Any, Optional, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from mtlfno.core.errors import ConfigError
from mtlfno.model.config import AmplitudeMode, ModelConfig, ModelVariant, TrainConfig

logger = logging.getLogger(__name__)

SchemaT = TypeVar("SchemaT", bound=BaseModel)


class TrainMode(StrEnum):
    """``mtl`` trains one shared model; ``independent`` one vanilla FNO per task."""

    MTL = "mtl"
    INDEPENDENT = "independent"


class SweepAxis(StrEnum):
    RANK = "rank"
    TRAIN_SIZE = "train_size"


class ReportFormat(StrEnum):
    JSON = "json"
    CSV = "csv"
    TABLE = "table"


class DataSplit(StrEnum):
    TRAIN = "train"
    TEST = "test"


class RunSpec(BaseModel):
    """
    Everything needed to reproduce a training run.

    Attributes:
        dataset (Optional[Path]): Dataset directory written by ``gen``.
        out (Path): Parent directory of the run directories.
        model (ModelConfig): Architecture; grid, sensor and task extents are
            reconciled with the dataset at run time.
        train (TrainConfig): Optimizer and schedule.
        mode (TrainMode): Multi-task or independent baseline training.
        train_size (Optional[int]): Restrict every task to this many training samples.
        reports (list[ReportFormat]): Outputs to produce besides the checkpoint.
        inference_repeats (int): Timed forwards per inference measurement.
    """

    model_config = ConfigDict(extra="forbid")

    dataset: Optional[Path] = None
    out: Path = Path("runs")
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    mode: TrainMode = TrainMode.MTL
    train_size: Optional[int] = Field(None, ge=1)
    reports: list[ReportFormat] = Field(
        default_factory=lambda: [ReportFormat.JSON, ReportFormat.CSV, ReportFormat.TABLE]
    )
    inference_repeats: int = Field(20, ge=20)

    @property
    def variant(self) -> ModelVariant:
        return self.model.variant

    def with_overrides(
        self,
        dataset: Optional[Path] = None,
        out: Optional[Path] = None,
        variant: Optional[ModelVariant] = None,
        mode: Optional[TrainMode] = None,
        epochs: Optional[int] = None,
        rank: Optional[int] = None,
        train_size: Optional[int] = None,
        seed: Optional[int] = None,
        amplitude: Optional[AmplitudeMode] = None,
    ) -> "RunSpec":
        """Return a copy with every non-``None`` flag applied and re-validated."""
        data = self.model_dump(mode="json")
        model_updates = {"variant": variant, "rank": rank, "amplitude_mode": amplitude}
        train_updates = {"epochs": epochs, "seed": seed}
        top_updates = {"dataset": dataset, "out": out, "mode": mode, "train_size": train_size}
        data["model"].update({k: v for k, v in model_updates.items() if v is not None})
        data["train"].update({k: v for k, v in train_updates.items() if v is not None})
        data.update({k: v for k, v in top_updates.items() if v is not None})
        return parse_model(RunSpec, data, "command-line overrides")


def parse_model(schema: Type[SchemaT], data: Any, source: str) -> SchemaT:
    """Validate ``data`` against ``schema``, raising ``ConfigError`` on failure."""
    try:
        return schema.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid {schema.__name__} in {source}: {exc}") from exc


def load_json_model(schema: Type[SchemaT], path: Path) -> SchemaT:
    """Read a JSON file and validate it against ``schema``."""
    try:
        with Path(path).open("r", encoding="utf-8") as file:
            data = json.load(file)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {schema.__name__} from {path}: {exc}") from exc
    logger.info(f"Loaded {schema.__name__} from {path}")
    return parse_model(schema, data, str(path))
