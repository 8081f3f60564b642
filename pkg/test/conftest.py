import numpy as np
import pytest

from mtlfno.local.synthetic import generate
from mtlfno.model.config import ModelConfig, ModelVariant, TrainConfig
from mtlfno.model.dataset import SyntheticSpec

TINY_SENSORS = [(0.2, 0.4), (0.6, 0.2), (0.8, 0.6)]


def tiny_config(**overrides) -> ModelConfig:
    """A model small enough to train for a few epochs inside a unit test."""
    values = dict(
        k1=4,
        k2=3,
        width=4,
        n_layers=2,
        rank=2,
        n_tasks=2,
        hidden=8,
        grid_h=8,
        grid_w=8,
        n_sensors=3,
        variant=ModelVariant.FULL,
    )
    values.update(overrides)
    return ModelConfig(**values)


def tiny_spec(**overrides) -> SyntheticSpec:
    values = dict(
        grid_h=8,
        grid_w=8,
        tasks=["potential", "grad_x"],
        sensors=[list(TINY_SENSORS), list(TINY_SENSORS)],
        n_train=6,
        n_test=3,
        seed=0,
    )
    values.update(overrides)
    return SyntheticSpec(**values)


def finite_difference(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the scalar function ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        original = x[index]
        x[index] = original + eps
        upper = f(x)
        x[index] = original - eps
        lower = f(x)
        x[index] = original
        grad[index] = (upper - lower) / (2.0 * eps)
    return grad


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def config():
    return tiny_config()


@pytest.fixture
def train_config():
    return TrainConfig(epochs=2, batch_size=3, lr0=1e-2, seed=0)


@pytest.fixture(scope="session")
def dataset():
    """Two-task 8x8 synthetic dataset with 6 training and 3 test samples."""
    return generate(tiny_spec())
