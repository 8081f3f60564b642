"""
The MTL-FNO network: parameter state, initialization and forward pass.

A ``ModelState`` is a flat mapping from parameter names to float64 arrays.
Names starting with ``tasks.`` are task-specific, everything else is shared:

- ``lift.{0,1}.{weight,bias}`` and ``proj.{0,1}.{weight,bias}``: pointwise
  dense layers, weights stored ``(out, in)``.
- ``layers.{l}.K_share.{re,im}``, ``layers.{l}.P_share``: full and nocayley.
- ``layers.{l}.R_share.{re,im}``: nopolar and noshare.
- ``layers.{l}.{W,b}``: noshare only (all tasks share the spatial mix).
- ``tasks.{i}.layers.{l}.k_factors.{j}.{re,im}``, ``p_factors.{j}``,
  ``lambda_k``, ``lambda_p``: CP deltas of full and nocayley.
- ``tasks.{i}.layers.{l}.r_factors.{j}.{re,im}``, ``lambda_r``: nopolar.
- ``tasks.{i}.layers.{l}.{W,b}``: task-specific spatial mix.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from numpy.typing import NDArray

from mtlfno.core import autodiff as ad
from mtlfno.core.autodiff import Node, RealTensor
from mtlfno.core.complex import ComplexTensor
from mtlfno.core.errors import ContractError, ShapeError
from mtlfno.core.spectral import ModeLayout, irfft2, pad_modes, rfft2, spectral_conv, truncate_modes
from mtlfno.core.weights import (
    DenseDeltaFactors,
    DenseSpectralParams,
    SharedSpectralParams,
    TaskCPFactors,
    build_spectral_weight,
)
from mtlfno.model.config import AmplitudeMode, GeluKind, ModelConfig, ModelVariant
from mtlfno.model.metrics import ParamCount

logger = logging.getLogger(__name__)

TASK_PREFIX = "tasks."


@dataclass
class ModelState:
    """
    Trainable state of one network.

    Attributes:
        config (ModelConfig): Architecture the parameters were built for.
        params (dict[str, RealTensor]): Parameter arrays by name.
        task_names (list[str]): Names of the ``n_tasks`` tasks, in index order.
    """

    config: ModelConfig
    params: dict[str, RealTensor]
    task_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.task_names:
            self.task_names = [f"task{i}" for i in range(self.config.n_tasks)]
        if len(self.task_names) != self.config.n_tasks:
            raise ContractError(
                f"{len(self.task_names)} task names for n_tasks={self.config.n_tasks}"
            )

    def shared_names(self) -> list[str]:
        return sorted(name for name in self.params if not name.startswith(TASK_PREFIX))

    def task_param_names(self, task: int) -> list[str]:
        prefix = f"{TASK_PREFIX}{task}."
        return sorted(name for name in self.params if name.startswith(prefix))

    def copy(self) -> "ModelState":
        return ModelState(
            self.config,
            {name: np.array(value) for name, value in self.params.items()},
            list(self.task_names),
        )


def _uniform(rng: np.random.Generator, bound: float, shape: tuple[int, ...]) -> RealTensor:
    return rng.uniform(-bound, bound, size=shape)


def _dense(params: dict, rng: np.random.Generator, name: str, fan_in: int, fan_out: int):
    bound = 1.0 / math.sqrt(fan_in)
    params[f"{name}.weight"] = _uniform(rng, bound, (fan_out, fan_in))
    params[f"{name}.bias"] = _uniform(rng, bound, (fan_out,))


def _complex(params: dict, rng: np.random.Generator, name: str, bound: float, shape: tuple[int, ...]):
    params[f"{name}.re"] = _uniform(rng, bound, shape)
    params[f"{name}.im"] = _uniform(rng, bound, shape)


def _near_identity(params: dict, rng: np.random.Generator, name: str, config: ModelConfig):
    c = config.width
    shape = (config.k1, config.k2, c, c)
    _complex(params, rng, name, 1.0 / c, shape)
    params[f"{name}.re"] = params[f"{name}.re"] + np.eye(c)


def init_state(
    config: ModelConfig,
    rng: np.random.Generator,
    task_names: Optional[list[str]] = None,
) -> ModelState:
    """
    Draw a fresh parameter set for ``config``.

    Shared complex tensors use ``U(-1/C, 1/C)`` on both parts and CP complex
    factors ``U(-1/(C sqrt(R)), 1/(C sqrt(R)))``; ``P_share`` starts at
    ``softplus^-1(1)`` (``1`` in raw mode) so initial amplitudes are one;
    ``lambda`` starts at ``1/R``; dense layers and ``W, b`` use fan-in
    uniform scaling. Dense spectral weights (nopolar, noshare) and the
    nocayley ``K_share`` start at identity plus ``U(-1/C, 1/C)`` noise.
    Parameters are drawn in a fixed order, so equal seeds give equal states.
    """
    c, k1, k2, rank = config.width, config.k1, config.k2, config.rank
    variant = ModelVariant(config.variant)
    params: dict[str, RealTensor] = {}
    _dense(params, rng, "lift.0", config.n_sensors + 2, config.hidden)
    _dense(params, rng, "lift.1", config.hidden, c)
    _dense(params, rng, "proj.0", c, config.hidden)
    _dense(params, rng, "proj.1", config.hidden, 1)

    p_init = math.log(math.e - 1.0) if config.amplitude_mode is AmplitudeMode.SOFTPLUS else 1.0
    cp_bound = 1.0 / (c * math.sqrt(rank))
    for layer in range(config.n_layers):
        base = f"layers.{layer}"
        if variant is ModelVariant.FULL:
            _complex(params, rng, f"{base}.K_share", 1.0 / c, (k1, k2, c, c))
        elif variant is ModelVariant.NOCAYLEY:
            _near_identity(params, rng, f"{base}.K_share", config)
        else:
            _near_identity(params, rng, f"{base}.R_share", config)
        if variant in (ModelVariant.FULL, ModelVariant.NOCAYLEY):
            params[f"{base}.P_share"] = np.full((k1, k2, c), p_init)
        if variant is ModelVariant.NOSHARE:
            params[f"{base}.W"] = _uniform(rng, 1.0 / math.sqrt(c), (c, c))
            params[f"{base}.b"] = _uniform(rng, 1.0 / math.sqrt(c), (c,))

    if variant is not ModelVariant.NOSHARE:
        for task in range(config.n_tasks):
            for layer in range(config.n_layers):
                base = f"{TASK_PREFIX}{task}.layers.{layer}"
                if variant is ModelVariant.NOPOLAR:
                    for j, extent in enumerate((k1, k2, c, c)):
                        _complex(params, rng, f"{base}.r_factors.{j}", cp_bound, (rank, extent))
                    params[f"{base}.lambda_r"] = np.full(rank, 1.0 / rank)
                else:
                    for j, extent in enumerate((k1, k2, c, c)):
                        _complex(params, rng, f"{base}.k_factors.{j}", cp_bound, (rank, extent))
                    for j, extent in enumerate((k1, k2, c)):
                        params[f"{base}.p_factors.{j}"] = _uniform(rng, cp_bound, (rank, extent))
                    params[f"{base}.lambda_k"] = np.full(rank, 1.0 / rank)
                    params[f"{base}.lambda_p"] = np.full(rank, 1.0 / rank)
                params[f"{base}.W"] = _uniform(rng, 1.0 / math.sqrt(c), (c, c))
                params[f"{base}.b"] = _uniform(rng, 1.0 / math.sqrt(c), (c,))

    logger.info(f"Initialized {variant} model with {len(params)} parameter tensors")
    return ModelState(config, params, list(task_names or []))


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes ``init_state`` produces for ``config``."""
    state = init_state(config, np.random.default_rng(0))
    return {name: value.shape for name, value in state.params.items()}


def bind(state: ModelState, requires_grad: bool = True) -> dict[str, Node]:
    """Wrap every parameter array in a named graph leaf."""
    return {
        name: ad.leaf(value, requires_grad=requires_grad, name=name)
        for name, value in state.params.items()
    }


def encode_input(sensors: NDArray, grid: tuple[int, int]) -> NDArray[np.float64]:
    """
    Broadcast a sensor vector to every grid point and append coordinates.

    Args:
        sensors: ``[..., n]`` sensor readings.
        grid: ``(H, W)``.

    Returns:
        ``[..., H, W, n + 2]``: channels ``0..n-1`` hold the sensors, then
        ``x = w / (W - 1)`` and ``y = h / (H - 1)``.
    """
    sensors = np.asarray(sensors, dtype=np.float64)
    if sensors.ndim < 1 or sensors.shape[-1] < 1:
        raise ShapeError(f"need at least one sensor, got shape {sensors.shape}")
    height, width = grid
    batch = sensors.shape[:-1]
    y, x = np.meshgrid(
        np.arange(height) / (height - 1), np.arange(width) / (width - 1), indexing="ij"
    )
    coords = np.broadcast_to(np.stack([x, y], axis=-1), batch + (height, width, 2))
    values = np.broadcast_to(
        sensors[..., None, None, :], batch + (height, width, sensors.shape[-1])
    )
    return np.concatenate([values, coords], axis=-1)


def dense(x: Node, weight: Node, bias: Node) -> Node:
    """Pointwise affine map ``x @ weight^T + bias`` over the last axis."""
    return ad.add(ad.matmul(x, ad.swapaxes(weight, 0, 1)), bias)


def spectral_path(v: Node, weight: ComplexTensor) -> Node:
    """``irfft2(pad(spectral_conv(truncate(rfft2(v)), R)))`` on ``v``'s own grid."""
    height, width = v.shape[-3], v.shape[-2]
    layout = ModeLayout(weight.shape[0], weight.shape[1], height, width)
    mixed = spectral_conv(truncate_modes(rfft2(v), layout), weight)
    return irfft2(pad_modes(mixed, layout), height, width)


def fno_layer(
    v: Node,
    weight: ComplexTensor,
    spatial: Node,
    bias: Node,
    gelu: GeluKind = GeluKind.TANH,
) -> Node:
    """``GeLU(v W^T + spectral_path(v, R) + b)`` on a ``[..., H, W, C]`` field."""
    if spatial.shape != (v.shape[-1], v.shape[-1]) or bias.shape != (v.shape[-1],):
        raise ShapeError(f"spatial mix {spatial.shape} / bias {bias.shape} vs field {v.shape}")
    mixed = ad.matmul(v, ad.swapaxes(spatial, 0, 1))
    return ad.gelu(ad.add(ad.add(mixed, spectral_path(v, weight)), bias), kind=str(gelu))


class MtlFnoNetwork:
    """
    Forward pass of an MTL-FNO over bound parameter nodes.

    Spectral weights are built lazily per ``(task, layer)`` and cached, so a
    batched forward of one task constructs each weight once.

    Attributes:
        config (ModelConfig): Architecture.
        nodes (Mapping[str, Node]): Parameter leaves from ``bind``.
    """

    def __init__(self, config: ModelConfig, nodes: Mapping[str, Node]):
        self.config = config
        self.nodes = nodes
        self.variant = ModelVariant(config.variant)
        self._weights: dict[tuple[int, int], ComplexTensor] = {}

    def _complex(self, name: str) -> ComplexTensor:
        return ComplexTensor(self.nodes[f"{name}.re"], self.nodes[f"{name}.im"])

    def _check_task(self, task: int) -> None:
        if not 0 <= task < self.config.n_tasks:
            raise ContractError(f"unknown task id {task}; model has {self.config.n_tasks} tasks")

    def shared_params(self, layer: int) -> SharedSpectralParams | DenseSpectralParams:
        base = f"layers.{layer}"
        if self.variant in (ModelVariant.FULL, ModelVariant.NOCAYLEY):
            return SharedSpectralParams(self._complex(f"{base}.K_share"), self.nodes[f"{base}.P_share"])
        return DenseSpectralParams(self._complex(f"{base}.R_share"))

    def task_factors(self, task: int, layer: int) -> Optional[TaskCPFactors | DenseDeltaFactors]:
        base = f"{TASK_PREFIX}{task}.layers.{layer}"
        if self.variant is ModelVariant.NOSHARE:
            return None
        if self.variant is ModelVariant.NOPOLAR:
            r_factors = tuple(self._complex(f"{base}.r_factors.{j}") for j in range(4))
            return DenseDeltaFactors(r_factors, self.nodes[f"{base}.lambda_r"])  # type: ignore[arg-type]
        return TaskCPFactors(
            k_factors=tuple(self._complex(f"{base}.k_factors.{j}") for j in range(4)),  # type: ignore[arg-type]
            p_factors=tuple(self.nodes[f"{base}.p_factors.{j}"] for j in range(3)),  # type: ignore[arg-type]
            lambda_k=self.nodes[f"{base}.lambda_k"],
            lambda_p=self.nodes[f"{base}.lambda_p"],
        )

    def spectral_weight(self, task: int, layer: int) -> ComplexTensor:
        self._check_task(task)
        key = (task, layer)
        if key not in self._weights:
            self._weights[key] = build_spectral_weight(
                self.shared_params(layer),
                self.task_factors(task, layer),
                self.variant,
                self.config.amplitude_mode,
            )
        return self._weights[key]

    def spatial_params(self, task: int, layer: int) -> tuple[Node, Node]:
        if self.variant is ModelVariant.NOSHARE:
            base = f"layers.{layer}"
        else:
            base = f"{TASK_PREFIX}{task}.layers.{layer}"
        return self.nodes[f"{base}.W"], self.nodes[f"{base}.b"]

    def forward(self, task: int, sensors: NDArray | Node) -> Node:
        """
        Reconstruct the field of ``task`` from its sensor readings.

        Args:
            task: Task index in ``[0, n_tasks)``.
            sensors: ``[n]`` or ``[B, n]`` sensor readings.

        Returns:
            ``[H, W]`` or ``[B, H, W]`` predicted field.

        Raises:
            ContractError: If ``task`` is out of range.
        """
        self._check_task(task)
        cfg = self.config
        gelu = str(cfg.gelu)
        values = sensors.value if isinstance(sensors, Node) else np.asarray(sensors, dtype=np.float64)
        if values.shape[-1] != cfg.n_sensors:
            raise ShapeError(f"expected {cfg.n_sensors} sensors, got shape {values.shape}")
        x = ad.constant(encode_input(values, (cfg.grid_h, cfg.grid_w)))
        n = self.nodes
        v = dense(x, n["lift.0.weight"], n["lift.0.bias"])
        v = dense(ad.gelu(v, kind=gelu), n["lift.1.weight"], n["lift.1.bias"])
        for layer in range(cfg.n_layers):
            spatial, bias = self.spatial_params(task, layer)
            v = fno_layer(v, self.spectral_weight(task, layer), spatial, bias, cfg.gelu)
        out = dense(v, n["proj.0.weight"], n["proj.0.bias"])
        out = dense(ad.gelu(out, kind=gelu), n["proj.1.weight"], n["proj.1.bias"])
        return ad.reshape(out, out.shape[:-1])


def forward(state: ModelState, task: int, sensors: NDArray) -> NDArray[np.float64]:
    """Gradient-free forward of ``state``; returns the predicted field array."""
    network = MtlFnoNetwork(state.config, bind(state, requires_grad=False))
    return np.array(network.forward(task, sensors).value)


def count_params(state: ModelState) -> ParamCount:
    """Partition the trainable scalars into shared and per-task counts."""
    shared = int(sum(state.params[name].size for name in state.shared_names()))
    per_task = [
        int(sum(state.params[name].size for name in state.task_param_names(task)))
        for task in range(state.config.n_tasks)
    ]
    return ParamCount(total=shared + sum(per_task), shared=shared, per_task=per_task)
