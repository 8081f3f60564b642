"""
Joint training of shared and task-specific parameters.

Every optimizer step draws one mini-batch per task, sums the per-task losses
and applies one Adam update to the union of all parameters, so the shared
parameters see gradients from every task at every step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from tqdm import tqdm

from mtlfno.core import autodiff as ad
from mtlfno.core.autodiff import Node, RealTensor
from mtlfno.core.errors import ContractError, NumericError, ShapeError
from mtlfno.core.seeding import seed_streams
from mtlfno.controller.network import ModelState, MtlFnoNetwork, bind
from mtlfno.model.config import LossKind, TrainConfig
from mtlfno.model.dataset import TaskDataset
from mtlfno.model.metrics import EpochRecord, TrainHistory

logger = logging.getLogger(__name__)


def task_loss(pred: Node, target: NDArray | Node, kind: LossKind = LossKind.L2) -> Node:
    """
    Reconstruction loss of one task.

    Args:
        pred: ``[H, W]`` or ``[B, H, W]`` prediction.
        target: Ground truth of the same shape.
        kind: ``l2`` is the unsquared Euclidean norm of the flattened residual,
            averaged over the batch; ``mse`` the mean squared residual.
    """
    target_node = target if isinstance(target, Node) else ad.constant(target)
    if pred.shape != target_node.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target_node.shape} differ")
    if pred.ndim < 2:
        raise ShapeError(f"expected [..., H, W] fields, got {pred.shape}")
    residual = ad.sub(pred, target_node)
    squared = ad.mul(residual, residual)
    if LossKind(kind) is LossKind.MSE:
        return ad.scale(ad.sum(squared), 1.0 / squared.value.size)
    per_sample = ad.sqrt(ad.sum(squared, axis=(-2, -1)))
    batch = max(1, per_sample.value.size)
    return ad.scale(ad.sum(per_sample), 1.0 / batch)


def total_loss(per_task: Sequence[Node], weights: Optional[Sequence[float]] = None) -> Node:
    """Weighted sum of per-task losses (uniform weights by default)."""
    if not per_task:
        raise ContractError("total_loss needs at least one task loss")
    if weights is not None and len(weights) != len(per_task):
        raise ContractError(f"{len(weights)} task weights for {len(per_task)} task losses")
    total: Optional[Node] = None
    for i, term in enumerate(per_task):
        if term.value.size != 1:
            raise ContractError(f"task loss {i} is not scalar: {term.shape}")
        weighted = term if weights is None else ad.scale(term, float(weights[i]))
        total = weighted if total is None else ad.add(total, weighted)
    assert total is not None
    return total


@dataclass
class AdamState:
    """
    Adam moment estimates.

    Attributes:
        step (int): Number of updates applied so far.
        m (dict[str, RealTensor]): First-moment estimates by parameter name.
        v (dict[str, RealTensor]): Second-moment estimates by parameter name.
    """

    step: int = 0
    m: dict[str, RealTensor] = field(default_factory=dict)
    v: dict[str, RealTensor] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: Mapping[str, RealTensor]) -> "AdamState":
        return cls(
            0,
            {name: np.zeros_like(value) for name, value in params.items()},
            {name: np.zeros_like(value) for name, value in params.items()},
        )


def adam_step(
    params: Mapping[str, RealTensor],
    grads: Mapping[str, RealTensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, RealTensor], AdamState]:
    """
    One bias-corrected Adam update.

    Parameters are visited in sorted name order and new dictionaries are
    returned; the inputs are left untouched.

    Raises:
        ContractError: If parameter and gradient names differ.
    """
    if set(params) != set(grads):
        missing = sorted(set(params) ^ set(grads))
        raise ContractError(f"parameter/gradient keys differ: {missing}")
    if state.m and set(state.m) != set(params):
        raise ContractError("optimizer state does not match the parameter set")
    step = state.step + 1
    correction1 = 1.0 - beta1**step
    correction2 = 1.0 - beta2**step
    new_params: dict[str, RealTensor] = {}
    new_m: dict[str, RealTensor] = {}
    new_v: dict[str, RealTensor] = {}
    for name in sorted(params):
        g = grads[name]
        m = beta1 * state.m.get(name, 0.0) + (1.0 - beta1) * g
        v = beta2 * state.v.get(name, 0.0) + (1.0 - beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        new_params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = np.asarray(m, dtype=np.float64)
        new_v[name] = np.asarray(v, dtype=np.float64)
    return new_params, AdamState(step, new_m, new_v)


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Step decay ``lr0 * decay_factor ** (epoch // decay_every)``."""
    if epoch < 0:
        raise ContractError(f"epoch must be non-negative, got {epoch}")
    return cfg.lr0 * cfg.decay_factor ** (epoch // cfg.decay_every)


def first_nonfinite(tensors: Mapping[str, Any]) -> Optional[str]:
    """Name of the first tensor (in mapping order) holding a NaN or infinity."""
    for name, value in tensors.items():
        if not np.all(np.isfinite(value)):
            return name
    return None


@dataclass
class TrainResult:
    state: ModelState
    history: TrainHistory


def _batches(n: int, batch_size: int, order: NDArray[np.intp]) -> list[NDArray[np.intp]]:
    return [order[start : start + batch_size] for start in range(0, n, batch_size)]


def train(
    state: ModelState,
    data: Sequence[TaskDataset],
    cfg: TrainConfig,
    show_progress: bool = True,
) -> TrainResult:
    """
    Train ``state`` jointly on every task of ``data``.

    Each epoch runs ``max_i ceil(N_i / batch_size)`` steps; tasks with fewer
    batches cycle through theirs. Training operates on z-scored sensors and
    fields (statistics from each task's training split).

    Args:
        state: Initial state; not modified.
        data: One dataset per task, in task-index order.
        cfg: Optimizer, schedule and batching settings.
        show_progress: Display a tqdm bar over epochs.

    Returns:
        TrainResult: The trained state and the per-epoch loss history.

    Raises:
        ContractError: If the task count differs from the model or a task has
            no training samples.
        NumericError: If a loss, gradient or parameter becomes non-finite;
            names the first offending tensor.
    """
    if len(data) != state.config.n_tasks:
        raise ContractError(f"{len(data)} datasets for a {state.config.n_tasks}-task model")
    for task in data:
        if task.n_train < 1:
            raise ContractError(f"task {task.name!r} has no training samples")
    if cfg.task_weights is not None and len(cfg.task_weights) != len(data):
        raise ContractError(f"{len(cfg.task_weights)} task weights for {len(data)} tasks")

    history = TrainHistory()
    result = state.copy()
    if cfg.epochs == 0:
        return TrainResult(result, history)

    names = [task.name for task in data]
    arrays = [task.normalized("train") for task in data]
    shuffle = seed_streams(cfg.seed).shuffle
    optimizer = AdamState.zeros_like(result.params)
    logger.info(f"Training {state.config.variant} model on {names} for {cfg.epochs} epochs")

    epochs: Any = range(cfg.epochs)
    if show_progress:
        epochs = tqdm(epochs, unit="epoch", desc="Training")
    for epoch in epochs:
        lr = lr_schedule(epoch, cfg)
        task_batches = [
            _batches(task.n_train, cfg.batch_size, shuffle.permutation(task.n_train))
            for task in data
        ]
        n_steps = max(len(batches) for batches in task_batches)
        sums = np.zeros(len(data))
        total_sum = 0.0
        for step in range(n_steps):
            nodes = bind(result)
            network = MtlFnoNetwork(result.config, nodes)
            losses = []
            for i, (sensors, fields) in enumerate(arrays):
                batch = task_batches[i][step % len(task_batches[i])]
                pred = network.forward(i, sensors[batch])
                losses.append(task_loss(pred, fields[batch], cfg.loss))
            total = total_loss(losses, cfg.task_weights)
            if not np.isfinite(total.value).all():
                culprit = first_nonfinite(result.params) or first_nonfinite(
                    {f"loss[{name}]": loss.value for name, loss in zip(names, losses)}
                ) or "loss[total]"
                logger.error(f"Non-finite loss at epoch {epoch} step {step}: {culprit}")
                raise NumericError(culprit)
            grads = ad.backward(total, nodes)
            culprit = first_nonfinite({f"grad[{k}]": grads[k] for k in sorted(grads)})
            if culprit:
                logger.error(f"Non-finite gradient at epoch {epoch} step {step}: {culprit}")
                raise NumericError(culprit)
            params, optimizer = adam_step(
                result.params, grads, optimizer, lr, cfg.beta1, cfg.beta2, cfg.eps
            )
            result = ModelState(result.config, params, result.task_names)
            sums += [float(loss.value) for loss in losses]
            total_sum += float(total.value)

        record = EpochRecord(
            epoch=epoch,
            lr=lr,
            task_losses={name: float(s / n_steps) for name, s in zip(names, sums)},
            total=total_sum / n_steps,
        )
        history.epochs.append(record)
        losses_str = ", ".join(f"{k}={v:.6g}" for k, v in record.task_losses.items())
        logger.info(f"Epoch {epoch}: lr={lr:.3g} total={record.total:.6g} {losses_str}")
        if show_progress:
            epochs.set_postfix(loss=f"{record.total:.4g}")

    if show_progress and hasattr(epochs, "close"):
        epochs.close()
    return TrainResult(result, history)
