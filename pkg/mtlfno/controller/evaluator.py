"""
Evaluation: regression metrics, inference timing and a FLOP heuristic.

Predictions are mapped back to field units with the task's training
statistics before any metric is computed.
"""

from __future__ import annotations

import logging
import math
import statistics
import time
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from mtlfno.core.errors import ContractError, NumericError, ShapeError
from mtlfno.controller.network import ModelState, MtlFnoNetwork, bind, count_params, forward
from mtlfno.core.polar import unitarity_stats
from mtlfno.core.weights import aggregate, cayley, cp_compose3, cp_compose4, skew_hermitian, unitarity_residual
from mtlfno.model.config import ModelConfig, ModelVariant
from mtlfno.model.dataset import TaskDataset
from mtlfno.model.metrics import MetricsReport, SliceStats, TaskMetrics, UnitarityReport

logger = logging.getLogger(__name__)

MIN_TIMED_FORWARDS = 20
UNITARITY_TOLERANCE = 1e-6


def regression_metrics(pred: NDArray, target: NDArray, task: str = "") -> TaskMetrics:
    """
    Pooled MSE, MAE and R² over every grid point of every sample.

    ``R² = 1 - sum((pred - y)^2) / sum((y - mean(y))^2)`` with ``mean(y)``
    taken over all points. Zero target variance leaves R² undefined.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    if target.size == 0:
        raise ContractError("cannot compute metrics on zero samples")
    residual = pred - target
    ss_res = float(np.sum(residual**2))
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    r2: Optional[float] = None if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    n_samples = target.shape[0] if target.ndim == 3 else 1
    return TaskMetrics(
        task=task,
        mse=float(np.mean(residual**2)),
        mae=float(np.mean(np.abs(residual))),
        r2=r2,
        r2_undefined=r2 is None,
        n_samples=n_samples,
    )


def predict(
    state: ModelState,
    task: int,
    dataset: TaskDataset,
    split: str = "test",
    batch_size: int = 20,
) -> NDArray[np.float64]:
    """De-normalized predictions ``[N, H, W]`` for every sample of ``split``."""
    stats = dataset.require_stats()
    sensors, _ = dataset.normalized(split)
    chunks = [
        forward(state, task, sensors[start : start + batch_size])
        for start in range(0, sensors.shape[0], batch_size)
    ]
    return stats.denormalize_field(np.concatenate(chunks, axis=0))


def evaluate(
    state: ModelState, dataset: TaskDataset, task: int, split: str = "test"
) -> TaskMetrics:
    """
    Metrics of ``task`` on ``split`` in field units.

    Raises:
        ContractError: If the split is empty or ``task`` is out of range.
    """
    _, fields = dataset.split(split)
    if fields.shape[0] < 1:
        raise ContractError(f"task {dataset.name!r} has no {split} samples")
    predictions = predict(state, task, dataset, split)
    metrics = regression_metrics(predictions, fields, dataset.name)
    logger.info(f"Evaluated {dataset.name} on {split}: mse={metrics.mse:.6g} mae={metrics.mae:.6g} r2={metrics.r2}")  # fmt: skip
    return metrics


def inference_time_ms(
    state: ModelState,
    task: int,
    sensors: NDArray,
    repeats: int = MIN_TIMED_FORWARDS,
) -> float:
    """Median wall-clock milliseconds of ``repeats`` single-sample forwards."""
    repeats = max(repeats, MIN_TIMED_FORWARDS)
    sensors = np.atleast_2d(np.asarray(sensors, dtype=np.float64))
    timings = []
    for i in range(repeats):
        sample = sensors[i % sensors.shape[0]]
        start = time.perf_counter()
        forward(state, task, sample)
        timings.append((time.perf_counter() - start) * 1000.0)
    return statistics.median(timings)


def flop_estimate(cfg: ModelConfig) -> int:
    """
    Heuristic forward cost of one sample.

    Per layer: FFT pair ``2 * 5 HW log2(HW) C``, spectral mixing
    ``8 k1 k2 C^2``, spatial mixing ``2 HW C^2``. Lifting and projection add
    ``2 HW ((n+2) hidden + hidden C)`` and ``2 HW (C hidden + hidden)``.
    """
    hw = cfg.grid_h * cfg.grid_w
    c = cfg.width
    fft = 2 * 5 * hw * math.log2(hw) * c
    spectral = 8 * cfg.k1 * cfg.k2 * c * c
    spatial = 2 * hw * c * c
    lifting = 2 * hw * ((cfg.n_sensors + 2) * cfg.hidden + cfg.hidden * c)
    projection = 2 * hw * (c * cfg.hidden + cfg.hidden)
    return int(round(cfg.n_layers * (fft + spectral + spatial) + lifting + projection))


def build_report(
    state: ModelState,
    data: Sequence[TaskDataset],
    split: str = "test",
    repeats: int = MIN_TIMED_FORWARDS,
) -> MetricsReport:
    """Evaluate every task of ``state`` and attach parameter, FLOP and timing figures."""
    if len(data) != state.config.n_tasks:
        raise ContractError(f"{len(data)} datasets for a {state.config.n_tasks}-task model")
    counts = count_params(state)
    tasks = [evaluate(state, dataset, i, split) for i, dataset in enumerate(data)]
    sensors, _ = data[0].normalized(split)
    return MetricsReport(
        variant=str(state.config.variant),
        tasks=tasks,
        params=counts.total,
        shared_params=counts.shared,
        per_task_params=counts.per_task,
        gflops=flop_estimate(state.config) / 1e9,
        inference_ms=inference_time_ms(state, 0, sensors, repeats),
    )


UNITARITY_NOTES = {
    ModelVariant.FULL: ("cayley U", ""),
    ModelVariant.NOCAYLEY: ("aggregated K", "no unitarity guarantee"),
    ModelVariant.NOPOLAR: ("dense R", "no unitary factor"),
    ModelVariant.NOSHARE: ("dense R", "no unitary factor"),
}


def _layer_factor(network: MtlFnoNetwork, task: int, layer: int) -> NDArray[np.complex128]:
    variant = network.variant
    if variant in (ModelVariant.NOPOLAR, ModelVariant.NOSHARE):
        return network.spectral_weight(task, layer).value
    shared = network.shared_params(layer)
    factors = network.task_factors(task, layer)
    k, _ = aggregate(
        shared,  # type: ignore[arg-type]
        cp_compose4(factors.k_factors, factors.lambda_k),  # type: ignore[union-attr]
        cp_compose3(factors.p_factors, factors.lambda_p),  # type: ignore[union-attr]
    )
    if variant is ModelVariant.FULL:
        return cayley(skew_hermitian(k)).slices.value
    return k.value


def unitarity_report(state: ModelState) -> UnitarityReport:
    """
    Singular-value statistics of the per-layer factor of every task.

    The full variant reports its Cayley factor; nocayley reports the
    aggregated pre-amplitude tensor and nopolar/noshare the dense weight,
    each labelled with a note since nothing constrains them.
    """
    variant = ModelVariant(state.config.variant)
    factor, note = UNITARITY_NOTES[variant]
    network = MtlFnoNetwork(state.config, bind(state, requires_grad=False))
    entries = []
    for layer in range(state.config.n_layers):
        for task, name in enumerate(state.task_names):
            values = _layer_factor(network, task, layer)
            stats = unitarity_stats(values)
            entries.append(
                SliceStats(layer, name, stats.mean_max_sv, stats.mean_min_sv, unitarity_residual(values))
            )
    counts = count_params(state)
    report = UnitarityReport(
        variant=str(variant),
        factor=factor,
        note=note,
        entries=entries,
        params=counts.total,
        shared_params=counts.shared,
        per_task_params=counts.per_task,
    )
    logger.info(f"Unitarity of {variant}: max deviation from 1 is {report.max_deviation:.3e}")
    return report


def check_unitarity(report: UnitarityReport, tolerance: float = UNITARITY_TOLERANCE) -> None:
    """
    Fail when a factor that should be unitary has drifted.

    Reports carrying a note (unconstrained variants) always pass.

    Raises:
        NumericError: If a mean singular value is further than ``tolerance`` from 1;
            names the worst layer and task.
    """
    if report.note or report.max_deviation <= tolerance:
        return
    worst = max(
        report.entries,
        key=lambda e: max(abs(e.mean_max_sv - 1.0), abs(e.mean_min_sv - 1.0)),
    )
    raise NumericError(
        f"layers.{worst.layer}[{worst.task}]",
        f"singular values of layer {worst.layer} task {worst.task!r} deviate from 1 by "
        f"{report.max_deviation:.3e} (tolerance {tolerance:g})",
    )
