"""
Loader for grid datasets produced outside ``mtlfno``.

An ``ExternalLayout`` descriptor (JSON) declares the record layout of the
files; records are converted to ``TaskDataset`` form and z-score statistics
are computed on the training split.
"""

import logging
from pathlib import Path
from typing import Optional

import numpy as np

from mtlfno.core.errors import ConfigError, DatasetError, TruncatedFileError
from mtlfno.local.dataset_io import HEADER_BYTES, load_dataset, read_manifest
from mtlfno.model.dataset import ExternalLayout, ExternalTask, FieldDataset, TaskDataset
from mtlfno.model.run import load_json_model

logger = logging.getLogger(__name__)


def layout_for_saved_dataset(path: Path) -> ExternalLayout:
    """Descriptor reading a directory written by ``save_dataset``."""
    manifest = read_manifest(Path(path))
    height, width = manifest["grid"]
    first = Path(path) / manifest["tasks"][0]["file"]
    with first.open("rb") as file:
        header = file.read(HEADER_BYTES)
    if len(header) < HEADER_BYTES:
        raise TruncatedFileError(str(first), "(header)")
    n_conditions = int(np.frombuffer(header, dtype="<u4", count=1, offset=20)[0])
    return ExternalLayout(
        grid_h=height,
        grid_w=width,
        dtype="f8",
        endianness="little",
        header_bytes=HEADER_BYTES,
        sensor_values="stored",
        extra_per_record=n_conditions,
        tasks=[
            ExternalTask(
                name=entry["name"],
                file=entry["file"],
                n_train=entry["n_train"],
                n_test=entry["n_test"],
                sensor_indices=[tuple(pair) for pair in entry["sensor_indices"]],
            )
            for entry in manifest["tasks"]
        ],
    )


def _task_indices(layout: ExternalLayout, task: ExternalTask) -> list[tuple[int, int]]:
    indices = task.sensor_indices if task.sensor_indices is not None else layout.sensor_indices
    if not indices:
        raise DatasetError(f"task {task.name!r} declares no sensor indices")
    for h, w in indices:
        if not (0 <= h < layout.grid_h and 0 <= w < layout.grid_w):
            raise DatasetError(
                f"sensor index ({h}, {w}) of task {task.name!r} is outside the "
                f"{layout.grid_h}x{layout.grid_w} grid"
            )
    return [(int(h), int(w)) for h, w in indices]


def _load_task(root: Path, layout: ExternalLayout, task: ExternalTask) -> TaskDataset:
    indices = _task_indices(layout, task)
    n_sensors = len(indices) if layout.sensor_values == "stored" else 0
    cells = layout.grid_h * layout.grid_w
    record = n_sensors + cells + layout.extra_per_record
    n_total = task.n_train + task.n_test
    dtype = layout.numpy_dtype
    target = root / task.file
    try:
        raw = target.read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read {target}: {exc}") from exc
    expected = layout.header_bytes + n_total * record * dtype.itemsize
    if len(raw) < expected:
        raise TruncatedFileError(str(target), f"({len(raw)} of {expected} bytes)")
    if len(raw) > expected:
        raise DatasetError(
            f"{target} holds {len(raw) - expected} bytes more than the descriptor declares"
        )
    values = np.frombuffer(raw, dtype=dtype, offset=layout.header_bytes).astype(np.float64)
    values = values.reshape(n_total, record)
    fields = values[:, n_sensors : n_sensors + cells].reshape(n_total, layout.grid_h, layout.grid_w)
    if layout.sensor_values == "stored":
        sensors = values[:, :n_sensors]
    else:
        rows = np.array([h for h, _ in indices])
        cols = np.array([w for _, w in indices])
        sensors = fields[:, rows, cols]
    conditions = values[:, n_sensors + cells :]
    dataset = TaskDataset(
        name=task.name,
        sensor_indices=indices,
        train_sensors=sensors[: task.n_train],
        train_fields=fields[: task.n_train],
        test_sensors=sensors[task.n_train :],
        test_fields=fields[task.n_train :],
        train_conditions=conditions[: task.n_train],
        test_conditions=conditions[task.n_train :],
    )
    dataset.compute_stats()
    logger.info(f"Loaded external task {task.name} from {target}")
    return dataset


def load_external_grid(path: Path, layout: ExternalLayout | Path) -> FieldDataset:
    """
    Load every task declared by ``layout``.

    Args:
        path: Directory holding the task files.
        layout: Descriptor, or the path of its JSON file.

    Raises:
        DatasetError: When the descriptor and the files disagree (sizes,
            sensor bounds, unreadable files).
    """
    if not isinstance(layout, ExternalLayout):
        layout = load_json_model(ExternalLayout, Path(layout))
    tasks = [_load_task(Path(path), layout, task) for task in layout.tasks]
    return FieldDataset(tasks=tasks)


def open_dataset(path: Optional[Path], layout: Optional[Path] = None) -> FieldDataset:
    """
    Load a dataset directory: ``gen`` output by default, or the external
    grid files described by ``layout``.

    Raises:
        ConfigError: If no dataset path was given.
    """
    if path is None:
        raise ConfigError("no dataset given; pass --dataset or set it in the run config")
    if layout is not None:
        return load_external_grid(Path(path), Path(layout))
    return load_dataset(Path(path))
