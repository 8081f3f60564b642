"""
MTL-FNO data models.

Pydantic schemas for everything read from JSON (model, training, dataset and
run configuration) and dataclasses for in-memory records.
"""

from mtlfno.model.config import (
    AmplitudeMode,
    GeluKind,
    LossKind,
    ModelConfig,
    ModelVariant,
    TrainConfig,
)
from mtlfno.model.dataset import (
    ExternalLayout,
    ExternalTask,
    FieldDataset,
    FieldSample,
    NormStats,
    SyntheticSpec,
    TaskDataset,
    TaskKind,
)
from mtlfno.model.metrics import (
    EpochRecord,
    MetricsReport,
    ParamCount,
    SliceStats,
    TaskMetrics,
    TrainHistory,
    UnitarityReport,
)
from mtlfno.model.run import DataSplit, ReportFormat, RunSpec, SweepAxis, TrainMode

__all__ = [
    "AmplitudeMode",
    "DataSplit",
    "EpochRecord",
    "ExternalLayout",
    "ExternalTask",
    "FieldDataset",
    "FieldSample",
    "GeluKind",
    "LossKind",
    "MetricsReport",
    "ModelConfig",
    "ModelVariant",
    "NormStats",
    "ParamCount",
    "ReportFormat",
    "RunSpec",
    "SliceStats",
    "SweepAxis",
    "SyntheticSpec",
    "TaskDataset",
    "TaskKind",
    "TaskMetrics",
    "TrainConfig",
    "TrainHistory",
    "TrainMode",
    "UnitarityReport",
]
