"""
Dataset directories: ``manifest.json`` plus one ``MTLD`` file per task.

``MTLD`` layout (all integers ``<u4``, all values ``<f8``)::

    magic      4 bytes  b"MTLD"
    version    u4       DATASET_FORMAT_VERSION
    dims       6 x u4   H, W, n_sensors, n_conditions, n_train, n_test
    records    (n_train + n_test) x [sensors (n), field (H*W, row-major), conditions]

Training records come first. The manifest records the SHA-256 of every task
file, which is verified on load.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np

from mtlfno.core.errors import ChecksumError, DatasetError, TruncatedFileError, VersionError
from mtlfno.model.dataset import FieldDataset, TaskDataset

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"MTLD"
DATASET_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
HEADER_BYTES = 4 + 4 + 6 * 4
VALUE_DTYPE = np.dtype("<f8")
INDEX_DTYPE = np.dtype("<u4")


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as file:
        for chunk in iter(lambda: file.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def encode_task(task: TaskDataset) -> bytes:
    """Serialize one task to the ``MTLD`` byte layout."""
    height, width = task.grid
    n_conditions = task.train_conditions.shape[1]
    dims = [height, width, task.n_sensors, n_conditions, task.n_train, task.n_test]
    header = DATASET_MAGIC + np.array([DATASET_FORMAT_VERSION, *dims], dtype=INDEX_DTYPE).tobytes()
    records = []
    for sensors, fields, conditions in (
        (task.train_sensors, task.train_fields, task.train_conditions),
        (task.test_sensors, task.test_fields, task.test_conditions),
    ):
        n = sensors.shape[0]
        records.append(np.concatenate([sensors, fields.reshape(n, -1), conditions], axis=1))
    payload = np.concatenate(records, axis=0).astype(VALUE_DTYPE, copy=False)
    return header + payload.tobytes()


def decode_task(
    raw: bytes, name: str, sensor_indices: list[tuple[int, int]], source: str
) -> TaskDataset:
    """Parse ``MTLD`` bytes; ``source`` names the file in error messages."""
    if len(raw) < HEADER_BYTES:
        raise TruncatedFileError(source, f"({len(raw)} bytes, header needs {HEADER_BYTES})")
    if raw[:4] != DATASET_MAGIC:
        raise DatasetError(f"{source} is not an MTLD file (magic {raw[:4]!r})")
    version, *dims = (int(v) for v in np.frombuffer(raw, dtype=INDEX_DTYPE, count=7, offset=4))
    if version != DATASET_FORMAT_VERSION:
        raise VersionError(version, DATASET_FORMAT_VERSION, source)
    height, width, n_sensors, n_conditions, n_train, n_test = dims
    record = n_sensors + height * width + n_conditions
    expected = HEADER_BYTES + (n_train + n_test) * record * VALUE_DTYPE.itemsize
    if len(raw) < expected:
        raise TruncatedFileError(source, f"({len(raw)} of {expected} bytes)")
    if len(raw) > expected:
        raise DatasetError(f"{source} has {len(raw) - expected} trailing bytes")
    if len(sensor_indices) != n_sensors:
        raise DatasetError(f"{source}: manifest lists {len(sensor_indices)} sensors, file has {n_sensors}")
    values = np.frombuffer(raw, dtype=VALUE_DTYPE, offset=HEADER_BYTES).reshape(n_train + n_test, record)
    values = values.astype(np.float64)
    sensors = values[:, :n_sensors]
    fields = values[:, n_sensors : n_sensors + height * width].reshape(-1, height, width)
    conditions = values[:, n_sensors + height * width :]
    task = TaskDataset(
        name=name,
        sensor_indices=[(int(h), int(w)) for h, w in sensor_indices],
        train_sensors=sensors[:n_train],
        train_fields=fields[:n_train],
        test_sensors=sensors[n_train:],
        test_fields=fields[n_train:],
        train_conditions=conditions[:n_train],
        test_conditions=conditions[n_train:],
    )
    task.compute_stats()
    return task


def save_dataset(data: FieldDataset, path: Path) -> dict[str, Any]:
    """
    Write ``data`` to the directory ``path``.

    Returns:
        dict: The manifest that was written.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for index, task in enumerate(data.tasks):
        filename = f"task_{index:02d}_{task.name}.mtld"
        target = path / filename
        target.write_bytes(encode_task(task))
        checksum = sha256_file(target)
        logger.info(f"Wrote {target} (sha256 {checksum})")
        entries.append(
            {
                "name": task.name,
                "file": filename,
                "n_train": task.n_train,
                "n_test": task.n_test,
                "sensor_indices": [list(pair) for pair in task.sensor_indices],
                "sha256": checksum,
                "norm": task.require_stats().to_dict(),
            }
        )
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "grid": list(data.grid),
        "seed": data.seed,
        "rng": data.rng,
        "spec": data.spec,
        "tasks": entries,
    }
    with (path / MANIFEST_NAME).open("w", encoding="utf-8") as file:
        json.dump(manifest, file, indent=2, sort_keys=True)
        file.write("\n")
    return manifest


def read_manifest(path: Path) -> dict[str, Any]:
    manifest_path = Path(path) / MANIFEST_NAME
    try:
        with manifest_path.open("r", encoding="utf-8") as file:
            manifest = json.load(file)
    except FileNotFoundError as exc:
        raise DatasetError(f"no dataset manifest at {manifest_path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read {manifest_path}: {exc}") from exc
    version = manifest.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise VersionError(version, DATASET_FORMAT_VERSION, str(manifest_path))
    if not isinstance(manifest.get("tasks"), list) or not manifest["tasks"]:
        raise DatasetError(f"{manifest_path} lists no tasks")
    return manifest


def load_dataset(path: Path) -> FieldDataset:
    """
    Load a dataset directory, verifying versions and checksums.

    Raises:
        VersionError: If the manifest or a task file has another version.
        ChecksumError: If a task file does not match its recorded SHA-256.
        TruncatedFileError: If a task file ends before its declared payload.
        DatasetError: For any other inconsistency.
    """
    path = Path(path)
    manifest = read_manifest(path)
    tasks = []
    for entry in manifest["tasks"]:
        try:
            target = path / entry["file"]
            name, indices, checksum = entry["name"], entry["sensor_indices"], entry["sha256"]
        except KeyError as exc:
            raise DatasetError(f"manifest task entry misses {exc}") from exc
        try:
            raw = target.read_bytes()
        except OSError as exc:
            raise DatasetError(f"cannot read {target}: {exc}") from exc
        if hashlib.sha256(raw).hexdigest() != checksum:
            raise ChecksumError(str(target))
        task = decode_task(raw, name, [tuple(pair) for pair in indices], str(target))
        if (task.n_train, task.n_test) != (entry.get("n_train"), entry.get("n_test")):
            raise DatasetError(f"{target}: sample counts disagree with the manifest")
        tasks.append(task)
        logger.info(f"Loaded task {name} from {target}")
    return FieldDataset(
        tasks=tasks, spec=manifest.get("spec"), seed=manifest.get("seed"), rng=manifest.get("rng")
    )
