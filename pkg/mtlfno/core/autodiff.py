"""Reverse-mode automatic differentiation over dense float64 tensors.

A ``Node`` wraps an immutable ``numpy`` array together with the parents it was
computed from and a vector-Jacobian product (``vjp``) closure. Operations are
plain functions that build new nodes; ``backward`` sweeps the graph in reverse
creation order and returns gradients for named parameter leaves.

Creation order is a valid topological order (a node's parents always exist
before it), so the sweep simply visits reachable nodes by descending creation
index. This keeps gradient accumulation deterministic.
"""

from __future__ import annotations

import logging
import math
from itertools import count
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.special import erf, expit

from mtlfno.core.errors import ContractError, ShapeError

logger = logging.getLogger(__name__)

RealTensor = NDArray[np.float64]
"""Row-major float64 array; the storage of every real-valued quantity."""

VJP = Callable[[RealTensor], Sequence[Optional[RealTensor]]]

# Global creation counter, gives every node its topological index
_node_counter = count()

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_GELU_CUBIC = 0.044715


class Node:
    """A value in the computation graph.

    Attributes:
        value: Immutable float64 array holding the forward value.
        parents: Nodes this value was computed from (empty for leaves and for
            nodes that do not require gradients).
        vjp: Maps the output cotangent to one cotangent per parent.
        requires_grad: Whether gradients flow into this node.
        index: Creation index, used for the reverse topological sweep.
        name: Optional parameter name; set for named leaves.
    """

    __slots__ = ("value", "parents", "vjp", "requires_grad", "index", "name")

    def __init__(
        self,
        value: Any,
        parents: tuple["Node", ...] = (),
        vjp: Optional[VJP] = None,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        array = np.array(value, dtype=np.float64)
        array.flags.writeable = False
        self.value: RealTensor = array
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.index = next(_node_counter)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __add__(self, other: "Node | float") -> "Node":
        return add(self, _as_node(other))

    def __radd__(self, other: float) -> "Node":
        return add(_as_node(other), self)

    def __sub__(self, other: "Node | float") -> "Node":
        return sub(self, _as_node(other))

    def __rsub__(self, other: float) -> "Node":
        return sub(_as_node(other), self)

    def __mul__(self, other: "Node | float") -> "Node":
        if isinstance(other, Node):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other: float) -> "Node":
        return scale(self, float(other))

    def __neg__(self) -> "Node":
        return neg(self)

    def __matmul__(self, other: "Node") -> "Node":
        return matmul(self, other)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Node#{self.index}{label}(shape={self.shape}, requires_grad={self.requires_grad})"


def _as_node(value: "Node | float | RealTensor") -> Node:
    return value if isinstance(value, Node) else constant(value)


def leaf(value: Any, requires_grad: bool = False, name: Optional[str] = None) -> Node:
    """Create a graph leaf, optionally a named trainable parameter."""
    return Node(value, requires_grad=requires_grad, name=name)


def constant(value: Any) -> Node:
    """Create a leaf that never receives gradients."""
    return Node(value)


def record(value: Any, parents: Sequence[Node], vjp: VJP) -> Node:
    """Register the result of a custom differentiable operation.

    Extension point for operations defined outside this module (FFTs, complex
    inversion). When no parent requires gradients the parents are dropped so
    inference graphs do not retain intermediate values.

    Args:
        value: Forward value of the operation.
        parents: Inputs of the operation, in the order ``vjp`` returns
            cotangents for them.
        vjp: Function mapping the output cotangent to one cotangent (or
            ``None``) per parent.
    """
    if any(parent.requires_grad for parent in parents):
        return Node(value, tuple(parents), vjp, requires_grad=True)
    return Node(value)


def _broadcast_shape(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    """Resolve the shape of a binary elementwise op.

    Broadcasting is restricted to one operand expanding into the other along
    trailing-aligned axes (missing leading axes or extent-1 axes).
    """
    try:
        result = tuple(np.broadcast_shapes(a, b))
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast shapes {a} and {b}") from exc
    if result != a and result != b:
        raise ShapeError(f"mutual broadcasting of {a} and {b} is not supported")
    return result


def _unbroadcast(grad: RealTensor, shape: tuple[int, ...]) -> RealTensor:
    """Sum a broadcast cotangent back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a: Node, b: Node) -> Node:
    _broadcast_shape(a.shape, b.shape)
    return record(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Node, b: Node) -> Node:
    _broadcast_shape(a.shape, b.shape)
    return record(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: Node, b: Node) -> Node:
    _broadcast_shape(a.shape, b.shape)
    return record(
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.shape),
            _unbroadcast(g * a.value, b.shape),
        ),
    )


def neg(a: Node) -> Node:
    return record(-a.value, (a,), lambda g: (-g,))


def scale(a: Node, factor: float) -> Node:
    """Multiply by a constant scalar."""
    return record(a.value * factor, (a,), lambda g: (g * factor,))


def gelu(a: Node, kind: str = "tanh") -> Node:
    """Gaussian error linear unit, ``x * Phi(x)``.

    Args:
        a: Input node.
        kind: ``"tanh"`` for the tanh approximation, ``"erf"`` for the exact
            erf-based form. Both are differentiated analytically.
    """
    x = a.value
    if kind == "tanh":
        inner = _SQRT_2_OVER_PI * (x + _GELU_CUBIC * x**3)
        t = np.tanh(inner)
        value = 0.5 * x * (1.0 + t)
        local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * _SQRT_2_OVER_PI * (
            1.0 + 3.0 * _GELU_CUBIC * x**2
        )
    elif kind == "erf":
        cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
        pdf = np.exp(-0.5 * x**2) / math.sqrt(2.0 * math.pi)
        value = x * cdf
        local = cdf + x * pdf
    else:
        raise ContractError(f"unknown GeLU kind {kind!r}")
    return record(value, (a,), lambda g: (g * local,))


def softplus(a: Node) -> Node:
    """``log(1 + exp(x))`` computed without overflow."""
    x = a.value
    return record(np.logaddexp(0.0, x), (a,), lambda g: (g * expit(x),))


_ELEMENTWISE: dict[str, Callable[..., Node]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "neg": neg,
    "gelu": gelu,
    "softplus": softplus,
}


def elementwise(kind: str, a: Node, b: Optional[Node] = None) -> Node:
    """Dispatch one of ``add, sub, mul, neg, gelu, softplus`` by name."""
    try:
        op = _ELEMENTWISE[kind]
    except KeyError as exc:
        raise ContractError(f"unknown elementwise op {kind!r}") from exc
    if kind in ("add", "sub", "mul"):
        if b is None:
            raise ContractError(f"{kind} needs two operands")
        return op(a, b)
    return op(a)


def sqrt(a: Node) -> Node:
    """Elementwise square root; the derivative at exactly zero is taken as 0."""
    value = np.sqrt(a.value)

    def vjp(g: RealTensor) -> tuple[RealTensor]:
        safe = np.where(value > 0.0, value, 1.0)
        return (np.where(value > 0.0, g / (2.0 * safe), 0.0),)

    return record(value, (a,), vjp)


def matmul(a: Node, b: Node) -> Node:
    """Matrix product with ``numpy.matmul`` batch semantics.

    ``b`` must be at least 2-D; leading axes of either operand broadcast.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"inner extents differ: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError as exc:
        raise ShapeError(f"batch axes differ: {a.shape} @ {b.shape}") from exc

    def vjp(g: RealTensor) -> tuple[RealTensor, RealTensor]:
        grad_a = g @ np.swapaxes(b.value, -1, -2)
        grad_b = np.swapaxes(a.value, -1, -2) @ g
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return record(a.value @ b.value, (a, b), vjp)


def sum(a: Node, axis: Optional[int | tuple[int, ...]] = None) -> Node:  # noqa: A001
    """Sum over ``axis`` (all axes when ``None``)."""
    value = np.sum(a.value, axis=axis)

    def vjp(g: RealTensor) -> tuple[RealTensor]:
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return record(value, (a,), vjp)


def reshape(a: Node, shape: tuple[int, ...]) -> Node:
    return record(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def swapaxes(a: Node, axis1: int, axis2: int) -> Node:
    return record(
        np.swapaxes(a.value, axis1, axis2),
        (a,),
        lambda g: (np.swapaxes(g, axis1, axis2),),
    )


def gather(a: Node, key: Any) -> Node:
    """Index ``a[key]``; the gradient scatter-adds back into ``a``'s shape."""

    def vjp(g: RealTensor) -> tuple[RealTensor]:
        grad = np.zeros(a.shape)
        np.add.at(grad, key, g)
        return (grad,)

    return record(a.value[key], (a,), vjp)


def scatter(a: Node, key: Any, shape: tuple[int, ...]) -> Node:
    """Place ``a`` at ``key`` inside a zero tensor of ``shape``.

    ``key`` must address distinct positions; the gradient gathers them back.
    """
    value = np.zeros(shape)
    try:
        value[key] = a.value
    except ValueError as exc:
        raise ShapeError(f"cannot scatter {a.shape} into {shape}") from exc
    return record(value, (a,), lambda g: (g[key],))


def einsum(subscripts: str, *operands: Node) -> Node:
    """Einstein summation with an explicit ``->`` output.

    Operand subscripts may not repeat a letter (no diagonals).
    """
    if "->" not in subscripts or "." in subscripts:
        raise ShapeError(f"einsum needs explicit output without ellipsis: {subscripts!r}")
    inputs_spec, output_spec = subscripts.replace(" ", "").split("->")
    specs = inputs_spec.split(",")
    if len(specs) != len(operands):
        raise ShapeError(f"{subscripts!r} expects {len(specs)} operands, got {len(operands)}")
    for spec, operand in zip(specs, operands):
        if len(set(spec)) != len(spec) or len(spec) != operand.ndim:
            raise ShapeError(f"bad einsum operand {spec!r} for shape {operand.shape}")
    try:
        value = np.einsum(subscripts, *(op.value for op in operands), optimize=True)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc

    def vjp(g: RealTensor) -> list[RealTensor]:
        grads = []
        for i, (spec, operand) in enumerate(zip(specs, operands)):
            others = [(s, o.value) for j, (s, o) in enumerate(zip(specs, operands)) if j != i]
            available = set(output_spec).union(*[set(s) for s, _ in others])
            kept = "".join(c for c in spec if c in available)
            formula = ",".join([output_spec] + [s for s, _ in others]) + "->" + kept
            partial = np.einsum(formula, g, *(v for _, v in others), optimize=True)
            if kept != spec:
                expanded_shape = tuple(
                    operand.shape[k] if c in kept else 1 for k, c in enumerate(spec)
                )
                partial = np.broadcast_to(partial.reshape(expanded_shape), operand.shape)
            grads.append(partial)
        return grads

    return record(value, operands, vjp)


def backward(
    loss: Node, params: Optional[Mapping[str, Node]] = None
) -> dict[str, RealTensor]:
    """Compute gradients of a scalar ``loss``.

    Args:
        loss: Scalar node (a single element).
        params: Parameter leaves keyed by id. When omitted, every named leaf
            reachable from ``loss`` is reported.

    Returns:
        Mapping parameter id to its gradient. Parameters not reachable from
        ``loss`` receive a zero gradient.

    Raises:
        ContractError: If ``loss`` is not scalar.
    """
    if loss.value.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    reachable: dict[int, Node] = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node.index in reachable or not node.requires_grad:
            continue
        reachable[node.index] = node
        stack.extend(node.parents)

    cotangents: dict[int, RealTensor] = {loss.index: np.ones(loss.shape)}
    leaf_grads: dict[int, RealTensor] = {}
    for index in sorted(reachable, reverse=True):
        node = reachable[index]
        g = cotangents.pop(index, None)
        if g is None:
            continue
        if node.vjp is None:
            leaf_grads[index] = g
            continue
        for parent, parent_grad in zip(node.parents, node.vjp(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            previous = cotangents.get(parent.index)
            cotangents[parent.index] = (
                np.asarray(parent_grad, dtype=np.float64)
                if previous is None
                else previous + parent_grad
            )

    if params is None:
        params = {node.name: node for node in reachable.values() if node.name and node.vjp is None}
    return {
        key: np.array(leaf_grads[node.index]) if node.index in leaf_grads else np.zeros(node.shape)
        for key, node in params.items()
    }
