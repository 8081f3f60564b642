"""SVD-based polar decomposition and singular-value diagnostics.

These routines work on plain ``complex128`` arrays and never touch the
autodiff graph; they verify trained or freshly built spectral weights.
"""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from mtlfno.core.complex import ComplexTensor
from mtlfno.core.errors import ShapeError, SingularityError

logger = logging.getLogger(__name__)

SINGULAR_TOLERANCE = 1e-12


class PolarFactors(NamedTuple):
    unitary: NDArray[np.complex128]
    positive: NDArray[np.complex128]


class UnitarityStats(NamedTuple):
    mean_max_sv: float
    mean_min_sv: float


def _as_array(h: ComplexTensor | NDArray) -> NDArray[np.complex128]:
    array = h.value if isinstance(h, ComplexTensor) else np.asarray(h, dtype=np.complex128)
    if array.ndim < 2 or array.shape[-1] != array.shape[-2]:
        raise ShapeError(f"expected square matrix slices, got {array.shape}")
    return array


def polar_decompose(h: ComplexTensor | NDArray) -> PolarFactors:
    """
    Right polar decomposition ``H = U P`` of every square slice.

    With the SVD ``H = W S V^H`` the factors are ``U = W V^H`` (unitary) and
    ``P = V S V^H`` (Hermitian positive definite).

    Args:
        h: ``[..., n, n]`` complex matrix or stack of matrices.

    Returns:
        PolarFactors: ``unitary`` and ``positive`` arrays shaped like ``h``.

    Raises:
        SingularityError: If a slice has a singular value below ``1e-12``.
    """
    array = _as_array(h)
    unitary = np.empty_like(array)
    positive = np.empty_like(array)
    for index in np.ndindex(array.shape[:-2]):
        w, s, vh = scipy.linalg.svd(array[index])
        if s[-1] < SINGULAR_TOLERANCE:
            raise SingularityError("polar input is numerically singular", slice_index=index)
        unitary[index] = w @ vh
        positive[index] = (vh.conj().T * s) @ vh
    return PolarFactors(unitary, positive)


def singular_values(r: ComplexTensor | NDArray) -> NDArray[np.float64]:
    """Descending singular values of every slice, ``[..., n]``."""
    return np.linalg.svd(_as_array(r), compute_uv=False)


def unitarity_stats(r: ComplexTensor | NDArray) -> UnitarityStats:
    """Mean over slices of the largest and smallest singular values."""
    values = singular_values(r)
    return UnitarityStats(float(values[..., 0].mean()), float(values[..., -1].mean()))
