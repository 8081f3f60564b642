"""Differentiable 2D Fourier transforms, mode truncation and spectral convolution.

Fields are channels-last, ``[..., H, W, C]``, with optional leading batch axes.
The forward transform is unnormalized and the inverse divides by ``H * W``.
Only the half spectrum along ``W`` is kept (``W // 2 + 1`` columns).

Mode truncation uses the corner split: along ``H`` the first ``k1 / 2`` rows
(non-negative frequencies) and the last ``k1 / 2`` rows (negative
frequencies) are kept, packed in that order; along the half-spectrum axis the
first ``k2`` columns are kept.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from mtlfno.core import autodiff as ad
from mtlfno.core.autodiff import Node
from mtlfno.core.complex import ComplexTensor, complex_matmul, complex_reshape
from mtlfno.core.errors import ShapeError

logger = logging.getLogger(__name__)

SpectralGrid = ComplexTensor
"""Half-spectrum coefficients, ``[..., H, W // 2 + 1, C]``."""


@dataclass(frozen=True)
class ModeLayout:
    """Retained-mode layout of one spectral layer.

    Attributes:
        k1: Retained modes along the full-spectrum axis (rows), even.
        k2: Retained columns along the half-spectrum axis.
        grid_h: Spatial extent along rows.
        grid_w: Spatial extent along columns.
    """

    k1: int
    k2: int
    grid_h: int
    grid_w: int

    def __post_init__(self):
        if min(self.k1, self.k2, self.grid_h, self.grid_w) <= 0:
            raise ShapeError(f"mode layout extents must be positive: {self}")
        if self.k1 % 2:
            raise ShapeError(f"k1 must be even for the corner split, got {self.k1}")
        if self.k1 > self.grid_h:
            raise ShapeError(f"k1={self.k1} exceeds grid_h={self.grid_h}")
        if self.k2 > self.half_width:
            raise ShapeError(f"k2={self.k2} exceeds grid_w/2+1={self.half_width}")

    @property
    def half_width(self) -> int:
        return self.grid_w // 2 + 1

    @property
    def rows(self) -> NDArray[np.intp]:
        """Row indices kept by the corner split, in packing order."""
        half = self.k1 // 2
        return np.concatenate(
            [np.arange(half), np.arange(self.grid_h - half, self.grid_h)]
        ).astype(np.intp)

    def key(self) -> tuple:
        return (Ellipsis, self.rows, slice(0, self.k2), slice(None))


def _check_field(v: Node) -> tuple[int, int]:
    if v.ndim < 3:
        raise ShapeError(f"expected [..., H, W, C] field, got {v.shape}")
    height, width = v.shape[-3], v.shape[-2]
    if height < 2 or width < 2:
        raise ShapeError(f"spatial extents must be >= 2, got {height}x{width}")
    return height, width


def rfft2(v: Node) -> SpectralGrid:
    """Unnormalized forward real DFT over the two spatial axes, channelwise.

    The backward pass applies the adjoint: the cotangent is zero-extended to
    the full spectrum and transformed with the (conjugated) inverse DFT.
    """
    height, width = _check_field(v)
    coeffs = np.fft.rfft2(v.value, axes=(-3, -2))

    def vjp(g: NDArray[np.float64]) -> tuple[NDArray[np.float64]]:
        full = np.zeros(v.shape, dtype=np.complex128)
        full[..., : coeffs.shape[-2], :] = g[0] + 1j * g[1]
        return (np.real(np.fft.ifft2(full, axes=(-3, -2))) * (height * width),)

    stacked = ad.record(np.stack([coeffs.real, coeffs.imag]), (v,), vjp)
    return ComplexTensor(ad.gather(stacked, 0), ad.gather(stacked, 1))


def irfft2(s: SpectralGrid, height: int, width: int) -> Node:
    """Inverse of ``rfft2``; divides by ``height * width``.

    Imaginary parts of the self-conjugate columns (zero and, for even width,
    Nyquist) are discarded, so the map is linear in ``(re, im)`` with the
    adjoint ``w[k2] * rfft2(g) / (H W)`` where ``w`` is 1 on self-conjugate
    columns and 2 elsewhere.
    """
    half = width // 2 + 1
    if s.ndim < 3 or s.shape[-3] != height or s.shape[-2] != half:
        raise ShapeError(f"spectrum {s.shape} does not match a {height}x{width} grid")
    field = np.fft.irfft2(s.value, s=(height, width), axes=(-3, -2))
    weights = np.full(half, 2.0)
    weights[0] = 1.0
    if width % 2 == 0:
        weights[-1] = 1.0
    weights = weights[:, None]

    def vjp(g: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        grad = np.fft.rfft2(g, axes=(-3, -2)) * weights / (height * width)
        return grad.real, grad.imag

    return ad.record(field, (s.re, s.im), vjp)


def truncate_modes(s: SpectralGrid, layout: ModeLayout) -> ComplexTensor:
    """Keep the corner-split low-mode block, ``[..., k1, k2, C]``."""
    if s.ndim < 3 or s.shape[-3] != layout.grid_h or s.shape[-2] != layout.half_width:
        raise ShapeError(f"spectrum {s.shape} incompatible with {layout}")
    key = layout.key()
    return ComplexTensor(ad.gather(s.re, key), ad.gather(s.im, key))


def pad_modes(t: ComplexTensor, layout: ModeLayout) -> SpectralGrid:
    """Scatter a ``[..., k1, k2, C]`` block back to its corner positions."""
    if t.ndim < 3 or t.shape[-3:-1] != (layout.k1, layout.k2):
        raise ShapeError(f"mode block {t.shape} inconsistent with {layout}")
    shape = t.shape[:-3] + (layout.grid_h, layout.half_width, t.shape[-1])
    key = layout.key()
    return ComplexTensor(ad.scatter(t.re, key, shape), ad.scatter(t.im, key, shape))


def spectral_conv(v_hat: ComplexTensor, weight: ComplexTensor) -> ComplexTensor:
    """Slice-wise channel mixing ``out[x, y, :] = R[x, y, :, :] @ v_hat[x, y, :]``.

    Args:
        v_hat: ``[..., k1, k2, C_in]`` retained coefficients.
        weight: ``[k1, k2, C_out, C_in]`` spectral weight, index order
            ``[out, in]``.

    Returns:
        ``[..., k1, k2, C_out]`` mixed coefficients.
    """
    if weight.ndim != 4 or v_hat.ndim < 3:
        raise ShapeError(f"spectral_conv shapes {v_hat.shape} and {weight.shape}")
    if v_hat.shape[-3:-1] != weight.shape[:2] or v_hat.shape[-1] != weight.shape[3]:
        raise ShapeError(f"mode/channel extents differ: {v_hat.shape} vs {weight.shape}")
    column = complex_reshape(v_hat, v_hat.shape + (1,))
    mixed = complex_matmul(weight, column)
    return complex_reshape(mixed, mixed.shape[:-1])
