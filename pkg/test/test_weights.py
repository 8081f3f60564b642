import numpy as np
import pytest

from mtlfno.core import autodiff as ad
from mtlfno.core.complex import ComplexTensor
from mtlfno.core.errors import ContractError, ShapeError
from mtlfno.core.weights import (
    DenseDeltaFactors,
    DenseSpectralParams,
    SharedSpectralParams,
    TaskCPFactors,
    aggregate,
    build_amplitude,
    build_spectral_weight,
    cayley,
    compose,
    cp_compose3,
    cp_compose4,
    skew_hermitian,
    unitarity_residual,
)
from mtlfno.model.config import AmplitudeMode, ModelVariant
from conftest import finite_difference

K1, K2, C, R = 2, 3, 4, 2


def _complex(rng, shape, scale=1.0):
    return ComplexTensor.constant(scale * (rng.normal(size=shape) + 1j * rng.normal(size=shape)))


def _task_factors(rng):
    return TaskCPFactors(
        k_factors=(_complex(rng, (R, K1)), _complex(rng, (R, K2)), _complex(rng, (R, C)), _complex(rng, (R, C))),
        p_factors=tuple(ad.constant(rng.normal(size=(R, n))) for n in (K1, K2, C)),  # type: ignore[arg-type]
        lambda_k=ad.constant(np.full(R, 0.1)),
        lambda_p=ad.constant(np.full(R, 0.1)),
    )


@pytest.mark.parametrize("channels", [2, 4, 8])
def test_cayley_output_is_unitary(channels, rng):
    for _ in range(334):
        k = _complex(rng, (3, channels, channels), scale=rng.uniform(0.01, 10.0))
        u = cayley(skew_hermitian(k)).slices.value
        assert unitarity_residual(u) <= 1e-8


def test_cayley_of_zero_is_identity():
    u = cayley(ComplexTensor.zeros((2, 3, 3))).slices.value
    np.testing.assert_allclose(u, np.broadcast_to(np.eye(3), (2, 3, 3)))


def test_cayley_rejects_non_skew_input(rng):
    with pytest.raises(ContractError):
        cayley(_complex(rng, (2, 3, 3)))


def test_skew_hermitian_projection(rng):
    k = skew_hermitian(_complex(rng, (2, 4, 4))).value
    np.testing.assert_allclose(k, -np.conj(np.swapaxes(k, -1, -2)), atol=1e-15)


def test_skew_hermitian_needs_square_slices():
    with pytest.raises(ShapeError):
        skew_hermitian(ComplexTensor.zeros((2, 3)))


def test_cp_compose_matches_einsum(rng):
    factors = [_complex(rng, (R, n)) for n in (K1, K2, C, C)]
    lam = rng.normal(size=R)
    out = cp_compose4(factors, ad.constant(lam)).value
    expected = np.einsum("r,ra,rb,rc,rd->abcd", lam, *(f.value for f in factors))
    np.testing.assert_allclose(out, expected, atol=1e-12)

    real = [rng.normal(size=(R, n)) for n in (K1, K2, C)]
    out3 = cp_compose3([ad.constant(f) for f in real], ad.constant(lam)).value
    np.testing.assert_allclose(out3, np.einsum("r,ra,rb,rc->abc", lam, *real), atol=1e-12)


def test_cp_rank_mismatch(rng):
    factors = [_complex(rng, (R, n)) for n in (K1, K2, C)] + [_complex(rng, (R + 1, C))]
    with pytest.raises(ShapeError):
        cp_compose4(factors, ad.constant(np.ones(R)))
    with pytest.raises(ShapeError):
        TaskCPFactors(
            k_factors=tuple(factors),  # type: ignore[arg-type]
            p_factors=tuple(ad.constant(np.ones((R, n))) for n in (K1, K2, C)),  # type: ignore[arg-type]
            lambda_k=ad.constant(np.ones(R)),
            lambda_p=ad.constant(np.ones(R)),
        )


def test_aggregate_shape_mismatch(rng):
    shared = SharedSpectralParams(_complex(rng, (K1, K2, C, C)), ad.constant(np.zeros((K1, K2, C))))
    with pytest.raises(ShapeError):
        aggregate(shared, _complex(rng, (K1, K2, C, C)), ad.constant(np.zeros((K1, K2, C + 1))))


def test_amplitude_modes():
    raw = ad.constant(np.array([-50.0, 0.0, 3.0]))
    soft = build_amplitude(raw, AmplitudeMode.SOFTPLUS).values.value
    assert np.all(soft > 0)
    np.testing.assert_allclose(build_amplitude(raw, AmplitudeMode.RAW).values.value, raw.value)


def test_compose_scales_columns(rng):
    u = _complex(rng, (K1, K2, C, C))
    p = rng.uniform(0.5, 2.0, size=(K1, K2, C))
    out = compose(u, build_amplitude(ad.constant(p), AmplitudeMode.RAW)).value
    np.testing.assert_allclose(out, u.value * p[:, :, None, :], atol=1e-14)


def test_full_weight_singular_values_are_amplitudes(rng):
    k_share = _complex(rng, (K1, K2, C, C), scale=1.0 / C)
    shared = SharedSpectralParams(k_share, ad.constant(rng.normal(size=(K1, K2, C))))
    weight = build_spectral_weight(shared, _task_factors(rng), ModelVariant.FULL)
    assert weight.shape == (K1, K2, C, C)
    values = weight.value
    gram = np.conj(np.swapaxes(values, -1, -2)) @ values
    # R = U diag(p) so R^H R = diag(p)^2
    off_diagonal = gram - np.eye(C) * np.diagonal(gram, axis1=-2, axis2=-1)[..., None, :]
    assert np.max(np.abs(off_diagonal)) < 1e-10


def test_variant_pipelines(rng):
    shared = SharedSpectralParams(_complex(rng, (K1, K2, C, C)), ad.constant(np.zeros((K1, K2, C))))
    task = _task_factors(rng)
    nocayley = build_spectral_weight(shared, task, ModelVariant.NOCAYLEY, AmplitudeMode.RAW)
    assert nocayley.shape == (K1, K2, C, C)

    dense = DenseSpectralParams(_complex(rng, (K1, K2, C, C)))
    np.testing.assert_allclose(build_spectral_weight(dense, None, ModelVariant.NOSHARE).value, dense.R_share.value)
    delta = DenseDeltaFactors(task.k_factors, task.lambda_k)
    nopolar = build_spectral_weight(dense, delta, ModelVariant.NOPOLAR).value
    np.testing.assert_allclose(nopolar, dense.R_share.value + cp_compose4(task.k_factors, task.lambda_k).value)

    with pytest.raises(ContractError):
        build_spectral_weight(dense, task, ModelVariant.FULL)


def test_gradient_through_cayley(rng):
    base = rng.normal(size=(1, 1, 3, 3)) * 0.3
    amplitude = ad.constant(np.ones((1, 1, 3)))
    target = rng.normal(size=(1, 1, 3, 3))

    def loss(re):
        k = ComplexTensor(re, ad.constant(np.zeros_like(base)))
        weight = compose(cayley(skew_hermitian(k)), build_amplitude(amplitude, AmplitudeMode.RAW))
        return ad.sum(ad.mul(weight.re, ad.constant(target)))

    leaf = ad.leaf(base, requires_grad=True, name="k")
    analytic = ad.backward(loss(leaf))["k"]
    numeric = finite_difference(lambda x: float(loss(ad.constant(x)).value), base)
    np.testing.assert_allclose(analytic, numeric, atol=1e-6)
