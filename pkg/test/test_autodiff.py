import numpy as np
import pytest

from mtlfno.core import autodiff as ad
from mtlfno.core.errors import ContractError, ShapeError
from conftest import finite_difference


def _grad_of(build, x: np.ndarray) -> np.ndarray:
    node = ad.leaf(x, requires_grad=True, name="x")
    return ad.backward(build(node))["x"]


def _value_of(build):
    return lambda x: float(build(ad.constant(x)).value)


def test_product_rule():
    a = ad.leaf(np.array([1.0, 2.0, 3.0]), requires_grad=True, name="a")
    b = ad.leaf(np.array([4.0, 5.0, 6.0]), requires_grad=True, name="b")
    grads = ad.backward(ad.sum(ad.mul(a, b)))
    np.testing.assert_allclose(grads["a"], b.value)
    np.testing.assert_allclose(grads["b"], a.value)


def test_shared_input_accumulates():
    x = ad.leaf(np.array([3.0]), requires_grad=True, name="x")
    loss = ad.sum(ad.add(ad.mul(x, x), x))
    np.testing.assert_allclose(ad.backward(loss)["x"], [7.0])


def test_unreachable_param_gets_zero_gradient():
    a = ad.leaf(np.ones(2), requires_grad=True, name="a")
    unused = ad.leaf(np.ones((2, 3)), requires_grad=True, name="unused")
    grads = ad.backward(ad.sum(a), {"a": a, "unused": unused})
    np.testing.assert_array_equal(grads["unused"], np.zeros((2, 3)))


def test_backward_rejects_non_scalar_loss():
    a = ad.leaf(np.ones(3), requires_grad=True, name="a")
    with pytest.raises(ContractError):
        ad.backward(ad.mul(a, a))


@pytest.mark.parametrize("kind", ["tanh", "erf"])
def test_gelu_gradient(kind, rng):
    x = rng.normal(size=(3, 4))

    def build(node):
        return ad.sum(ad.gelu(node, kind=kind))

    np.testing.assert_allclose(_grad_of(build, x), finite_difference(_value_of(build), x), atol=1e-7)


def test_gelu_values():
    out = ad.gelu(ad.constant(np.array([0.0, 1.0])), kind="erf").value
    np.testing.assert_allclose(out, [0.0, 0.8413447460685429], atol=1e-12)


def test_gelu_unknown_kind():
    with pytest.raises(ContractError):
        ad.gelu(ad.constant(np.zeros(2)), kind="relu")


def test_softplus_is_stable_and_differentiable(rng):
    big = ad.softplus(ad.constant(np.array([-800.0, 0.0, 800.0]))).value
    assert np.all(np.isfinite(big))
    np.testing.assert_allclose(big, [0.0, np.log(2.0), 800.0], atol=1e-12)
    x = rng.normal(size=5)

    def build(node):
        return ad.sum(ad.softplus(node))

    np.testing.assert_allclose(_grad_of(build, x), finite_difference(_value_of(build), x), atol=1e-8)


def test_matmul_gradient_with_batch_broadcast(rng):
    w = rng.normal(size=(3, 2))
    x = rng.normal(size=(4, 5, 3))

    def build(node):
        return ad.sum(ad.matmul(ad.constant(x), node) * ad.constant(np.arange(8.0).reshape(4, 1, 2)))

    np.testing.assert_allclose(_grad_of(build, w), finite_difference(_value_of(build), w), atol=1e-6)


def test_matmul_shape_errors():
    with pytest.raises(ShapeError):
        ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        ad.matmul(ad.constant(np.ones(3)), ad.constant(np.ones((3, 3))))


def test_einsum_gradient_with_contracted_axes(rng):
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(2, 4))
    c = rng.normal(size=(2,))

    def build(node):
        out = ad.einsum("r,ra,rb->ab", ad.constant(c), node, ad.constant(b))
        return ad.sum(ad.mul(out, out))

    np.testing.assert_allclose(_grad_of(build, a), finite_difference(_value_of(build), a), atol=1e-7)


def test_einsum_rejects_implicit_output():
    with pytest.raises(ShapeError):
        ad.einsum("ab,bc", ad.constant(np.ones((2, 2))), ad.constant(np.ones((2, 2))))


def test_gather_scatter_roundtrip_gradients(rng):
    x = rng.normal(size=(5, 3))
    key = (np.array([0, 3, 4]), slice(None))

    def build(node):
        picked = ad.gather(node, key)
        placed = ad.scatter(ad.mul(picked, picked), key, (5, 3))
        return ad.sum(placed)

    np.testing.assert_allclose(_grad_of(build, x), finite_difference(_value_of(build), x), atol=1e-7)


def test_sqrt_gradient_is_zero_at_zero():
    x = ad.leaf(np.array([0.0, 4.0]), requires_grad=True, name="x")
    np.testing.assert_allclose(ad.backward(ad.sum(ad.sqrt(x)))["x"], [0.0, 0.25])


def test_elementwise_dispatch():
    a = ad.constant(np.array([1.0, -2.0]))
    b = ad.constant(np.array([3.0, 4.0]))
    np.testing.assert_allclose(ad.elementwise("mul", a, b).value, [3.0, -8.0])
    np.testing.assert_allclose(ad.elementwise("neg", a).value, [-1.0, 2.0])
    with pytest.raises(ContractError):
        ad.elementwise("add", a)
    with pytest.raises(ContractError):
        ad.elementwise("tanh", a)


def test_leaf_copies_its_source():
    source = np.array([1.0, 2.0])
    node = ad.leaf(source, requires_grad=True, name="x")
    source[0] = 7.0
    np.testing.assert_array_equal(node.value, [1.0, 2.0])


def _random_chain(rng: np.random.Generator, length: int):
    mix = rng.normal(size=(4, 4)) / 2.0
    gain = rng.normal(size=(3, 4))
    target = rng.normal(size=(3, 4))
    steps = [
        lambda n: ad.gelu(n),
        lambda n: ad.softplus(n),
        lambda n: ad.mul(n, ad.constant(gain)),
        lambda n: ad.matmul(n, ad.constant(mix)),
        lambda n: ad.sqrt(ad.add(ad.mul(n, n), ad.constant(np.ones(1)))),
        lambda n: ad.sub(ad.softplus(n), ad.scale(n, 0.5)),
        lambda n: ad.gelu(n, kind="erf"),
    ]
    chosen = [steps[i] for i in rng.integers(len(steps), size=length)]

    def build(node):
        for step in chosen:
            node = step(node)
        return ad.sum(ad.mul(node, ad.constant(target)))

    return build


@pytest.mark.parametrize("seed", range(100))
def test_random_chain_matches_finite_difference(seed):
    rng = np.random.default_rng(seed)
    build = _random_chain(rng, length=4)
    x = rng.normal(size=(3, 4))
    analytic = _grad_of(build, x)
    numeric = finite_difference(_value_of(build), x, eps=1e-5)
    assert np.linalg.norm(analytic - numeric) <= 1e-4 * np.linalg.norm(numeric) + 1e-10
