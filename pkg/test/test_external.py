import json
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
import pytest

from mtlfno.core.errors import ConfigError, DatasetError, TruncatedFileError
from mtlfno.local.dataset_io import save_dataset
from mtlfno.local.external import layout_for_saved_dataset, load_external_grid, open_dataset
from mtlfno.model.dataset import ExternalLayout, ExternalTask


def _write_grid_file(path: Path, fields: np.ndarray, header: bytes = b"HEAD") -> None:
    records = fields.reshape(fields.shape[0], -1).astype(">f4")
    path.write_bytes(header + records.tobytes())


def _layout(**overrides) -> ExternalLayout:
    values = dict(
        grid_h=4,
        grid_w=5,
        sensor_indices=[(0, 0), (3, 4)],
        dtype="f4",
        endianness="big",
        header_bytes=4,
        sensor_values="from_field",
        tasks=[ExternalTask(name="pressure", file="pressure.bin", n_train=3, n_test=2)],
    )
    values.update(overrides)
    return ExternalLayout(**values)


def test_from_field_sensors_in_big_endian_f4():
    fields = np.arange(5 * 20, dtype=np.float64).reshape(5, 4, 5)
    with TemporaryDirectory() as tmp:
        _write_grid_file(Path(tmp) / "pressure.bin", fields)
        data = load_external_grid(Path(tmp), _layout())
    task = data.task("pressure")
    assert (task.n_train, task.n_test) == (3, 2)
    np.testing.assert_array_equal(task.test_fields, fields[3:])
    np.testing.assert_array_equal(task.train_sensors[:, 1], fields[:3, 3, 4])
    assert task.stats is not None


def test_layout_from_json_file():
    fields = np.ones((5, 4, 5))
    with TemporaryDirectory() as tmp:
        _write_grid_file(Path(tmp) / "pressure.bin", fields)
        descriptor = Path(tmp) / "layout.json"
        descriptor.write_text(json.dumps(_layout().model_dump(mode="json")))
        data = load_external_grid(Path(tmp), descriptor)
    assert data.grid == (4, 5)


def test_size_mismatches():
    fields = np.ones((5, 4, 5))
    with TemporaryDirectory() as tmp:
        target = Path(tmp) / "pressure.bin"
        _write_grid_file(target, fields[:4])
        with pytest.raises(TruncatedFileError):
            load_external_grid(Path(tmp), _layout())
        _write_grid_file(target, np.ones((6, 4, 5)))
        with pytest.raises(DatasetError):
            load_external_grid(Path(tmp), _layout())


def test_sensor_outside_grid():
    with TemporaryDirectory() as tmp:
        _write_grid_file(Path(tmp) / "pressure.bin", np.ones((5, 4, 5)))
        with pytest.raises(DatasetError):
            load_external_grid(Path(tmp), _layout(sensor_indices=[(4, 0)]))


def test_saved_dataset_through_descriptor(dataset):
    with TemporaryDirectory() as tmp:
        save_dataset(dataset, Path(tmp))
        layout = layout_for_saved_dataset(Path(tmp))
        assert layout.extra_per_record == 5
        loaded = open_dataset(Path(tmp), None)
        external = load_external_grid(Path(tmp), layout)
    for a, b in zip(loaded.tasks, external.tasks):
        np.testing.assert_array_equal(a.train_fields, b.train_fields)
        np.testing.assert_array_equal(a.train_sensors, b.train_sensors)
        np.testing.assert_array_equal(a.test_conditions, b.test_conditions)


def test_open_dataset_needs_a_path():
    with pytest.raises(ConfigError):
        open_dataset(None)
