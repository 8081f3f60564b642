"""
``MTLF`` checkpoint container.

Layout (integers ``<u4``, tensor data ``<f8`` row-major)::

    magic        4 bytes  b"MTLF"
    version      u4       CHECKPOINT_FORMAT_VERSION
    config_len   u4       then ``config_len`` bytes of UTF-8 JSON:
                          {"model": ModelConfig, "task_names": [...]}
    n_tensors    u4
    n_tensors x  name_len u4, name (UTF-8), ndim u4, dims (ndim x u4), data

Tensors are written in sorted name order and the JSON block uses sorted keys,
so equal states produce byte-identical files.
"""

import io
import json
import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from mtlfno.core.errors import CheckpointError
from mtlfno.controller.network import ModelState, param_shapes
from mtlfno.model.config import ModelConfig

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"MTLF"
CHECKPOINT_FORMAT_VERSION = 1
_U4 = np.dtype("<u4")
_F8 = np.dtype("<f8")


def _u4(*values: int) -> bytes:
    return np.array(values, dtype=_U4).tobytes()


def encode_checkpoint(state: ModelState) -> bytes:
    config = {
        "model": state.config.model_dump(mode="json"),
        "task_names": list(state.task_names),
    }
    block = json.dumps(config, sort_keys=True).encode("utf-8")
    buffer = io.BytesIO()
    buffer.write(CHECKPOINT_MAGIC)
    buffer.write(_u4(CHECKPOINT_FORMAT_VERSION, len(block)))
    buffer.write(block)
    buffer.write(_u4(len(state.params)))
    for name in sorted(state.params):
        value = np.ascontiguousarray(state.params[name], dtype=_F8)
        encoded = name.encode("utf-8")
        buffer.write(_u4(len(encoded)))
        buffer.write(encoded)
        buffer.write(_u4(value.ndim, *value.shape))
        buffer.write(value.tobytes())
    return buffer.getvalue()


def save_checkpoint(state: ModelState, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(state))
    logger.info(f"Saved checkpoint with {len(state.params)} tensors to {path}")
    return path


class _Reader:
    def __init__(self, raw: bytes, source: str):
        self.raw = raw
        self.offset = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.raw):
            raise CheckpointError(f"{self.source} is truncated at byte {self.offset}")
        chunk = self.raw[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u4(self, count: int = 1) -> list[int]:
        return [int(v) for v in np.frombuffer(self.take(4 * count), dtype=_U4)]


def _check_tensors(params: dict[str, np.ndarray], model: ModelConfig, source: str) -> None:
    expected = param_shapes(model)
    missing = sorted(expected.keys() - params.keys())
    unexpected = sorted(params.keys() - expected.keys())
    if missing or unexpected:
        raise CheckpointError(f"{source} tensors do not match its config: missing {missing}, unexpected {unexpected}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise CheckpointError(f"{source}: tensor {name} has shape {params[name].shape}, expected {shape}")


def decode_checkpoint(raw: bytes, source: str = "<bytes>") -> ModelState:
    """
    Rebuild a ``ModelState`` from ``MTLF`` bytes.

    Raises:
        CheckpointError: On a bad magic, version, config block, truncation, or
            tensors that do not match the config.
    """
    reader = _Reader(raw, source)
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{source} is not an MTLF checkpoint")
    version, block_len = reader.u4(2)
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"{source} has checkpoint version {version}, expected {CHECKPOINT_FORMAT_VERSION}"
        )
    try:
        config = json.loads(reader.take(block_len).decode("utf-8"))
        model = ModelConfig.model_validate(config["model"])
        task_names = [str(name) for name in config.get("task_names", [])]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, ValidationError) as exc:
        raise CheckpointError(f"{source} has an invalid config block: {exc}") from exc
    (n_tensors,) = reader.u4()
    params = {}
    for _ in range(n_tensors):
        (name_len,) = reader.u4()
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{source} has a tensor name that is not UTF-8") from exc
        (ndim,) = reader.u4()
        shape = tuple(reader.u4(ndim)) if ndim else ()
        size = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(reader.take(size * _F8.itemsize), dtype=_F8).reshape(shape).astype(np.float64)
    if reader.offset != len(raw):
        raise CheckpointError(f"{source} has {len(raw) - reader.offset} trailing bytes")
    _check_tensors(params, model, source)
    return ModelState(model, params, task_names)


def load_checkpoint(path: Path) -> ModelState:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    state = decode_checkpoint(raw, str(path))
    logger.info(f"Loaded checkpoint {path} ({state.config.variant}, {len(state.params)} tensors)")
    return state
