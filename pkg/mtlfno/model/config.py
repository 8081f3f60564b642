"""
Configuration schemas for the network and the optimizer.

Both schemas are pydantic models so they can be read from and written to the
JSON run configuration and the checkpoint config block without hand-written
parsing. Field validators enforce the shape contracts the numerical core
relies on.
"""

from enum import StrEnum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ModelVariant(StrEnum):
    """Spectral-weight parameterization (the full model and its ablations)."""

    FULL = "full"
    NOSHARE = "noshare"
    NOPOLAR = "nopolar"
    NOCAYLEY = "nocayley"


class AmplitudeMode(StrEnum):
    """Activation applied to the aggregated amplitude tensor."""

    SOFTPLUS = "softplus"
    RAW = "raw"


class GeluKind(StrEnum):
    TANH = "tanh"
    ERF = "erf"


class LossKind(StrEnum):
    """Per-task reconstruction loss: unsquared L2 norm or mean squared error."""

    L2 = "l2"
    MSE = "mse"


class ModelConfig(BaseModel):
    """
    Architecture hyperparameters governing every shape contract.

    Attributes:
        k1 (int): Retained modes along the grid rows (even, corner split).
        k2 (int): Retained half-spectrum columns.
        width (int): Channel width ``C`` of the Fourier layers.
        n_layers (int): Number of stacked Fourier layers ``L``.
        rank (int): CP rank ``R`` of the task-specific deltas.
        n_tasks (int): Number of tasks ``T``.
        hidden (int): Hidden width of the lifting and projection networks.
        grid_h (int): Output grid rows.
        grid_w (int): Output grid columns.
        n_sensors (int): Sensor count per task.
        variant (ModelVariant): Spectral-weight parameterization.
        amplitude_mode (AmplitudeMode): Amplitude activation.
        gelu (GeluKind): GeLU form used by every activation.
    """

    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    k1: int = Field(16, gt=0)
    k2: int = Field(16, gt=0)
    width: int = Field(32, gt=0)
    n_layers: int = Field(4, gt=0)
    rank: int = Field(8, gt=0)
    n_tasks: int = Field(4, gt=0)
    hidden: int = Field(128, gt=0)
    grid_h: int = Field(64, gt=1)
    grid_w: int = Field(64, gt=1)
    n_sensors: int = Field(4, gt=0)
    variant: ModelVariant = ModelVariant.FULL
    amplitude_mode: AmplitudeMode = AmplitudeMode.SOFTPLUS
    gelu: GeluKind = GeluKind.TANH

    @model_validator(mode="after")
    def _check_modes(self) -> "ModelConfig":
        if self.k1 % 2:
            raise ValueError(f"k1 must be even, got {self.k1}")
        if self.k1 > self.grid_h:
            raise ValueError(f"k1={self.k1} exceeds grid_h={self.grid_h}")
        if self.k2 > self.grid_w // 2 + 1:
            raise ValueError(f"k2={self.k2} exceeds grid_w/2+1={self.grid_w // 2 + 1}")
        return self


class TrainConfig(BaseModel):
    """
    Optimizer, schedule and batching settings.

    Attributes:
        epochs (int): Number of passes over the training data.
        lr0 (float): Initial learning rate.
        decay_factor (float): Step-decay multiplier.
        decay_every (int): Epochs between decays.
        batch_size (int): Samples per task per step.
        beta1 (float): Adam first-moment decay.
        beta2 (float): Adam second-moment decay.
        eps (float): Adam denominator epsilon.
        seed (int): Master seed, fanned out to init and shuffle streams.
        loss (LossKind): Per-task loss form.
        task_weights (Optional[list[float]]): Static per-task loss weights;
            uniform when omitted.
    """

    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(100, ge=0)
    lr0: float = Field(1e-3, gt=0.0)
    decay_factor: float = Field(0.5, gt=0.0, le=1.0)
    decay_every: int = Field(20, gt=0)
    batch_size: int = Field(10, gt=0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    seed: int = 0
    loss: LossKind = LossKind.L2
    task_weights: Optional[list[float]] = None
