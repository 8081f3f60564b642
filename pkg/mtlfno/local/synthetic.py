"""
Synthetic multi-task fields built from a shared Gaussian potential.

Each sample draws one amplitude per source; the potential
``phi = sum_j a_j exp(-|r - r_j|^2 / (2 sigma^2))`` and every task field
derived from it (its analytic gradient components and its square) share that
draw, which is what correlates the tasks.
"""

import logging

import numpy as np
from numpy.typing import NDArray
from tqdm import tqdm

from mtlfno.core.seeding import RNG_NAME, seed_streams
from mtlfno.model.dataset import FieldDataset, SyntheticSpec, TaskDataset, TaskKind

logger = logging.getLogger(__name__)


def grid_coordinates(height: int, width: int) -> tuple[NDArray, NDArray]:
    """``(x, y)`` arrays of shape ``[H, W]`` with ``x = w/(W-1)``, ``y = h/(H-1)``."""
    y, x = np.meshgrid(
        np.arange(height) / (height - 1), np.arange(width) / (width - 1), indexing="ij"
    )
    return x, y


def task_fields(spec: SyntheticSpec, amplitudes: NDArray, kind: TaskKind) -> NDArray[np.float64]:
    """
    Evaluate one task's field for a batch of amplitude draws.

    Args:
        spec: Generator spec.
        amplitudes: ``[N, J]`` source amplitudes.
        kind: Which field to evaluate.

    Returns:
        ``[N, H, W]`` fields.
    """
    x, y = grid_coordinates(spec.grid_h, spec.grid_w)
    centers = np.asarray(spec.sources, dtype=np.float64)
    dx = x[None] - centers[:, 0, None, None]
    dy = y[None] - centers[:, 1, None, None]
    sigma2 = spec.sigma**2
    gauss = np.exp(-(dx**2 + dy**2) / (2.0 * sigma2))
    kind = TaskKind(kind)
    if kind is TaskKind.GRAD_X:
        return np.einsum("nj,jhw->nhw", amplitudes, -gauss * dx / sigma2)
    if kind is TaskKind.GRAD_Y:
        return np.einsum("nj,jhw->nhw", amplitudes, -gauss * dy / sigma2)
    potential = np.einsum("nj,jhw->nhw", amplitudes, gauss)
    return potential**2 if kind is TaskKind.SQUARED else potential


def generate(spec: SyntheticSpec, show_progress: bool = False) -> FieldDataset:
    """
    Generate every task of ``spec`` from the seeded generator stream.

    Amplitudes for all ``n_train + n_test`` samples are drawn first (training
    samples come first), then the optional sensor noise, so the fields do not
    depend on the noise level.
    """
    rng = seed_streams(spec.seed).generator
    n_total = spec.n_train + spec.n_test
    amplitudes = rng.uniform(
        spec.amplitude_min, spec.amplitude_max, size=(n_total, len(spec.sources))
    )
    tasks: list[TaskDataset] = []
    items = list(enumerate(spec.tasks))
    iterator = tqdm(items, unit="task", desc="Generating") if show_progress else items
    for index, kind in iterator:
        fields = task_fields(spec, amplitudes, kind)
        indices = spec.sensor_indices(index)
        rows = np.array([h for h, _ in indices])
        cols = np.array([w for _, w in indices])
        sensors = fields[:, rows, cols]
        if spec.sensor_noise > 0:
            sensors = sensors + rng.normal(0.0, spec.sensor_noise, size=sensors.shape)
        task = TaskDataset(
            name=str(kind),
            sensor_indices=indices,
            train_sensors=sensors[: spec.n_train],
            train_fields=fields[: spec.n_train],
            test_sensors=sensors[spec.n_train :],
            test_fields=fields[spec.n_train :],
            train_conditions=amplitudes[: spec.n_train],
            test_conditions=amplitudes[spec.n_train :],
        )
        task.compute_stats()
        tasks.append(task)
        logger.info(f"Generated task {kind}: {spec.n_train} train / {spec.n_test} test samples")
    return FieldDataset(
        tasks=tasks,
        spec=spec.model_dump(mode="json"),
        seed=spec.seed,
        rng=RNG_NAME,
    )
