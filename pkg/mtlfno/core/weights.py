"""Construction of task-specific spectral weights.

For the full model the weight of task ``i`` at one layer is built as:

1. CP-compose the task deltas ``dK`` (complex, four factors) and ``dP``
   (real, three factors);
2. aggregate them with the shared ``K_share`` and ``P_share``;
3. project ``K`` onto its skew-Hermitian part;
4. map it to a unitary tensor with the Cayley transform;
5. compose ``R = U @ diag(p)`` slice-wise with the activated amplitudes.

The ablation variants reuse the same building blocks (see
``build_spectral_weight``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from mtlfno.core import autodiff as ad
from mtlfno.core.autodiff import Node
from mtlfno.core.complex import (
    ComplexTensor,
    complex_add,
    complex_einsum,
    complex_inverse,
    complex_matmul,
    complex_scale_real,
    complex_sub,
    conj_transpose,
    identity_like,
)
from mtlfno.core.errors import ContractError, NumericError, ShapeError
from mtlfno.model.config import AmplitudeMode, ModelVariant

logger = logging.getLogger(__name__)

SKEW_TOLERANCE = 1e-10
UNITARY_TOLERANCE = 1e-8


@dataclass(frozen=True)
class SharedSpectralParams:
    """Layer-wide parameters shared by all tasks (full and nocayley variants).

    Attributes:
        K_share: ``[k1, k2, C, C]`` complex pre-unitary tensor.
        P_share: ``[k1, k2, C]`` raw amplitudes.
    """

    K_share: ComplexTensor
    P_share: Node


@dataclass(frozen=True)
class DenseSpectralParams:
    """Layer-wide dense spectral weight ``R_share`` (noshare and nopolar)."""

    R_share: ComplexTensor


@dataclass(frozen=True)
class TaskCPFactors:
    """CP factor bundle of one task at one layer.

    Attributes:
        k_factors: Complex factors shaped ``[R, k1], [R, k2], [R, C], [R, C]``.
        p_factors: Real factors shaped ``[R, k1], [R, k2], [R, C]``.
        lambda_k: ``[R]`` scales of the ``dK`` rank-one terms.
        lambda_p: ``[R]`` scales of the ``dP`` rank-one terms.
    """

    k_factors: tuple[ComplexTensor, ComplexTensor, ComplexTensor, ComplexTensor]
    p_factors: tuple[Node, Node, Node]
    lambda_k: Node
    lambda_p: Node

    def __post_init__(self):
        ranks = {f.shape[0] for f in self.k_factors}
        ranks |= {f.shape[0] for f in self.p_factors}
        ranks |= {self.lambda_k.shape[0], self.lambda_p.shape[0]}
        if len(ranks) != 1:
            raise ShapeError(f"CP factors disagree on rank: {sorted(ranks)}")


@dataclass(frozen=True)
class DenseDeltaFactors:
    """Four-way complex CP factors of a dense ``dR`` (nopolar variant)."""

    r_factors: tuple[ComplexTensor, ComplexTensor, ComplexTensor, ComplexTensor]
    lambda_r: Node


@dataclass(frozen=True)
class AmplitudeTensor:
    """Diagonal amplitudes of every mode slice, ``[k1, k2, C]``."""

    values: Node


@dataclass(frozen=True)
class UnitaryTensor:
    """Tensor whose ``[C, C]`` mode slices are unitary."""

    slices: ComplexTensor


def _check_rank(factors: Sequence[ComplexTensor | Node], lam: Node) -> int:
    ranks = {f.shape[0] for f in factors} | {lam.shape[0]}
    if len(ranks) != 1 or lam.ndim != 1 or any(f.ndim != 2 for f in factors):
        raise ShapeError(
            f"inconsistent CP factors: {[f.shape for f in factors]} with lambda {lam.shape}"
        )
    return lam.shape[0]


def cp_compose4(
    factors: Sequence[ComplexTensor], lam: Node
) -> ComplexTensor:
    """``D[a,b,c,d] = sum_r lam[r] f1[r,a] f2[r,b] f3[r,c] f4[r,d]`` (complex)."""
    if len(factors) != 4:
        raise ShapeError(f"cp_compose4 needs four factors, got {len(factors)}")
    _check_rank(factors, lam)
    f1, f2, f3, f4 = factors
    outer = complex_einsum("ra,rb->rab", f1, f2)
    outer = complex_einsum("rab,rc->rabc", outer, f3)
    return complex_einsum("r,rabc,rd->abcd", lam, outer, f4)


def cp_compose3(factors: Sequence[Node], lam: Node) -> Node:
    """``D[a,b,c] = sum_r lam[r] f1[r,a] f2[r,b] f3[r,c]`` (real)."""
    if len(factors) != 3:
        raise ShapeError(f"cp_compose3 needs three factors, got {len(factors)}")
    _check_rank(factors, lam)
    return ad.einsum("r,ra,rb,rc->abc", lam, *factors)


def aggregate(
    shared: SharedSpectralParams, delta_k: ComplexTensor, delta_p: Node
) -> tuple[ComplexTensor, Node]:
    """``K = K_share + dK`` and ``P_raw = P_share + dP``."""
    if shared.K_share.shape != delta_k.shape or shared.P_share.shape != delta_p.shape:
        raise ShapeError(
            f"aggregate shapes: K {shared.K_share.shape} vs {delta_k.shape}, "
            f"P {shared.P_share.shape} vs {delta_p.shape}"
        )
    return complex_add(shared.K_share, delta_k), ad.add(shared.P_share, delta_p)


def skew_hermitian(k: ComplexTensor) -> ComplexTensor:
    """Slice-wise anti-symmetrization ``(K - K^H) / 2``."""
    if k.ndim < 2 or k.shape[-1] != k.shape[-2]:
        raise ShapeError(f"skew_hermitian needs square slices, got {k.shape}")
    diff = complex_sub(k, conj_transpose(k))
    return ComplexTensor(ad.scale(diff.re, 0.5), ad.scale(diff.im, 0.5))


def unitarity_residual(u: np.ndarray) -> float:
    """Largest ``||U^H U - I||_F`` over all slices of a complex array."""
    gram = np.conj(np.swapaxes(u, -1, -2)) @ u
    residual = gram - np.eye(u.shape[-1])
    return float(np.max(np.linalg.norm(residual, axis=(-2, -1))))


def cayley(k_hat: ComplexTensor) -> UnitaryTensor:
    """Slice-wise Cayley transform ``U = (I - K)(I + K)^-1``.

    Raises:
        ContractError: If an input slice is not skew-Hermitian within 1e-10.
        NumericError: If an output slice drifts from unitarity beyond 1e-8.
    """
    value = k_hat.value
    deviation = np.max(np.abs(value + np.conj(np.swapaxes(value, -1, -2))), initial=0.0)
    if deviation > SKEW_TOLERANCE:
        raise ContractError(f"cayley input is not skew-Hermitian (deviation {deviation:.3e})")
    eye = identity_like(k_hat)
    u = complex_matmul(complex_sub(eye, k_hat), complex_inverse(complex_add(eye, k_hat)))
    residual = unitarity_residual(u.value)
    if residual > UNITARY_TOLERANCE:
        raise NumericError("cayley", f"Cayley output not unitary (residual {residual:.3e})")
    return UnitaryTensor(u)


def build_amplitude(p_raw: Node, mode: AmplitudeMode = AmplitudeMode.SOFTPLUS) -> AmplitudeTensor:
    """Activate raw amplitudes; ``softplus`` guarantees positivity, ``raw`` passes through."""
    if AmplitudeMode(mode) is AmplitudeMode.SOFTPLUS:
        return AmplitudeTensor(ad.softplus(p_raw))
    return AmplitudeTensor(p_raw)


def compose(u: UnitaryTensor | ComplexTensor, p: AmplitudeTensor) -> ComplexTensor:
    """Slice-wise ``R = U @ diag(p)``: column ``c`` of ``U`` scaled by ``p[c]``."""
    slices = u.slices if isinstance(u, UnitaryTensor) else u
    if slices.ndim != 4 or slices.shape[:2] + slices.shape[3:] != p.values.shape:
        raise ShapeError(f"compose shapes: U {slices.shape} vs p {p.values.shape}")
    k1, k2, channels = p.values.shape
    columns = ad.reshape(p.values, (k1, k2, 1, channels))
    return complex_scale_real(slices, columns)


def build_spectral_weight(
    shared: SharedSpectralParams | DenseSpectralParams,
    task: Optional[TaskCPFactors | DenseDeltaFactors],
    variant: ModelVariant,
    amplitude_mode: AmplitudeMode = AmplitudeMode.SOFTPLUS,
) -> ComplexTensor:
    """
    Build the final spectral weight of one task at one layer.

    Args:
        shared: Layer-wide parameters; ``SharedSpectralParams`` for the full
            and nocayley variants, ``DenseSpectralParams`` otherwise.
        task: Task deltas; ``TaskCPFactors`` for full/nocayley,
            ``DenseDeltaFactors`` for nopolar, ``None`` for noshare.
        variant: Which pipeline to run:
            ``full`` CP, aggregate, skew-Hermitian, Cayley, compose;
            ``nocayley`` CP, aggregate, compose (no projection, no Cayley);
            ``nopolar`` ``R_share + dR`` with ``dR`` from four complex factors;
            ``noshare`` ``R_share`` alone.
        amplitude_mode: Amplitude activation for full and nocayley.

    Returns:
        ``[k1, k2, C, C]`` complex spectral weight.
    """
    variant = ModelVariant(variant)
    if variant in (ModelVariant.FULL, ModelVariant.NOCAYLEY):
        if not isinstance(shared, SharedSpectralParams) or not isinstance(task, TaskCPFactors):
            raise ContractError(f"{variant} needs shared K/P params and task CP factors")
        delta_k = cp_compose4(task.k_factors, task.lambda_k)
        delta_p = cp_compose3(task.p_factors, task.lambda_p)
        k, p_raw = aggregate(shared, delta_k, delta_p)
        amplitude = build_amplitude(p_raw, amplitude_mode)
        if variant is ModelVariant.FULL:
            return compose(cayley(skew_hermitian(k)), amplitude)
        return compose(k, amplitude)
    if not isinstance(shared, DenseSpectralParams):
        raise ContractError(f"{variant} needs a dense shared spectral weight")
    if variant is ModelVariant.NOPOLAR:
        if not isinstance(task, DenseDeltaFactors):
            raise ContractError("nopolar needs dense-delta CP factors")
        return complex_add(shared.R_share, cp_compose4(task.r_factors, task.lambda_r))
    return shared.R_share
