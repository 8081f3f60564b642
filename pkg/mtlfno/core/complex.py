"""Complex arithmetic layered on paired real nodes.

A ``ComplexTensor`` is a pair of real ``Node``s of identical shape. Complex
parameters are therefore optimized as independent real/imaginary pairs and
every complex operation differentiates through real operations, except for
``complex_inverse`` which registers its own vector-Jacobian product.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Any, Optional

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from mtlfno.core import autodiff as ad
from mtlfno.core.autodiff import Node
from mtlfno.core.errors import ShapeError, SingularityError

PIVOT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ComplexTensor:
    """Complex tensor stored as real and imaginary nodes.

    Attributes:
        re: Real part.
        im: Imaginary part, same shape as ``re``.
    """

    re: Node
    im: Node

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ShapeError(f"re/im shapes differ: {self.re.shape} vs {self.im.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.re.shape

    @property
    def ndim(self) -> int:
        return self.re.ndim

    @property
    def value(self) -> NDArray[np.complex128]:
        """Forward value as a ``complex128`` array (detached from the graph)."""
        return self.re.value + 1j * self.im.value

    @classmethod
    def constant(cls, value: Any) -> "ComplexTensor":
        """Wrap a complex array as a gradient-free tensor."""
        array = np.asarray(value, dtype=np.complex128)
        return cls(ad.constant(array.real), ad.constant(array.imag))

    @classmethod
    def zeros(cls, shape: tuple[int, ...]) -> "ComplexTensor":
        return cls(ad.constant(np.zeros(shape)), ad.constant(np.zeros(shape)))


def complex_add(a: ComplexTensor, b: ComplexTensor) -> ComplexTensor:
    return ComplexTensor(ad.add(a.re, b.re), ad.add(a.im, b.im))


def complex_sub(a: ComplexTensor, b: ComplexTensor) -> ComplexTensor:
    return ComplexTensor(ad.sub(a.re, b.re), ad.sub(a.im, b.im))


def complex_scale_real(a: ComplexTensor, factor: Node) -> ComplexTensor:
    """Multiply by a real tensor (broadcast into ``a``)."""
    return ComplexTensor(ad.mul(a.re, factor), ad.mul(a.im, factor))


def conj_transpose(a: ComplexTensor) -> ComplexTensor:
    """Slice-wise conjugate transpose over the two trailing axes."""
    return ComplexTensor(ad.swapaxes(a.re, -1, -2), ad.neg(ad.swapaxes(a.im, -1, -2)))


def complex_reshape(a: ComplexTensor, shape: tuple[int, ...]) -> ComplexTensor:
    return ComplexTensor(ad.reshape(a.re, shape), ad.reshape(a.im, shape))


def complex_matmul(a: ComplexTensor, b: ComplexTensor) -> ComplexTensor:
    """``(a.re b.re - a.im b.im, a.re b.im + a.im b.re)`` over four real matmuls."""
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"inner extents differ: {a.shape} @ {b.shape}")
    re = ad.sub(ad.matmul(a.re, b.re), ad.matmul(a.im, b.im))
    im = ad.add(ad.matmul(a.re, b.im), ad.matmul(a.im, b.re))
    return ComplexTensor(re, im)


def complex_einsum(subscripts: str, *operands: "ComplexTensor | Node") -> ComplexTensor:
    """Einstein summation over a mix of complex and real operands.

    Expands the product into one real ``einsum`` per choice of real/imaginary
    part of each complex operand; a term with ``m`` imaginary factors carries
    ``i**m``.
    """
    complex_slots = [i for i, op in enumerate(operands) if isinstance(op, ComplexTensor)]
    re_terms: list[Node] = []
    im_terms: list[Node] = []
    for choice in product((0, 1), repeat=len(complex_slots)):
        picked: list[Node] = []
        imag_count = 0
        for i, op in enumerate(operands):
            if isinstance(op, ComplexTensor):
                part = choice[complex_slots.index(i)]
                picked.append(op.im if part else op.re)
                imag_count += part
            else:
                picked.append(op)
        term = ad.einsum(subscripts, *picked)
        # i**m cycles through 1, i, -1, -i
        if imag_count % 4 >= 2:
            term = ad.neg(term)
        (im_terms if imag_count % 2 else re_terms).append(term)

    def _total(terms: list[Node], like: Node) -> Node:
        if not terms:
            return ad.constant(np.zeros(like.shape))
        total = terms[0]
        for term in terms[1:]:
            total = ad.add(total, term)
        return total

    re = _total(re_terms, re_terms[0] if re_terms else im_terms[0])
    im = _total(im_terms, re)
    return ComplexTensor(re, im)


def check_pivots(matrix: NDArray[np.complex128]) -> None:
    """Raise ``SingularityError`` when any LU pivot falls below tolerance.

    Args:
        matrix: ``[..., n, n]`` complex array.
    """
    _, _, upper = scipy.linalg.lu(matrix)
    pivots = np.abs(np.diagonal(upper, axis1=-2, axis2=-1))
    smallest = pivots.min(axis=-1)
    bad = np.argwhere(np.atleast_1d(smallest) < PIVOT_TOLERANCE)
    if bad.size:
        index = tuple(int(i) for i in bad[0]) if matrix.ndim > 2 else ()
        raise SingularityError("LU pivot below tolerance", slice_index=index)


def complex_inverse(a: ComplexTensor) -> ComplexTensor:
    """Slice-wise inverse of square complex matrices.

    The backward rule is ``d(A^-1) = -A^-1 dA A^-1``; for a real loss this
    maps the cotangent ``G`` of the inverse to ``-(A^-1)^H G (A^-1)^H``.

    Raises:
        ShapeError: If trailing slices are not square.
        SingularityError: If an LU pivot magnitude is below ``1e-12``.
    """
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ShapeError(f"complex_inverse needs square slices, got {a.shape}")
    matrix = a.value
    check_pivots(matrix)
    inverse = np.linalg.inv(matrix)
    inverse_h = np.conj(np.swapaxes(inverse, -1, -2))

    def vjp(g: NDArray[np.float64]) -> tuple[Optional[NDArray], Optional[NDArray]]:
        grad = -(inverse_h @ (g[0] + 1j * g[1]) @ inverse_h)
        return grad.real, grad.imag

    stacked = ad.record(np.stack([inverse.real, inverse.imag]), (a.re, a.im), vjp)
    return ComplexTensor(ad.gather(stacked, 0), ad.gather(stacked, 1))


def identity_like(a: ComplexTensor) -> ComplexTensor:
    """Identity slices broadcastable against ``a``'s trailing square axes."""
    return ComplexTensor.constant(np.eye(a.shape[-1]))
