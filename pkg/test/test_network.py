import numpy as np
import pytest

from mtlfno.core import autodiff as ad
from mtlfno.core.complex import ComplexTensor
from mtlfno.core.errors import ContractError, ShapeError
from mtlfno.core.seeding import seed_streams
from mtlfno.controller.network import (
    MtlFnoNetwork,
    ModelState,
    bind,
    count_params,
    encode_input,
    fno_layer,
    forward,
    init_state,
    spectral_path,
)
from mtlfno.model.config import ModelConfig, ModelVariant
from conftest import finite_difference, tiny_config


def _state(variant=ModelVariant.FULL, seed=0, **overrides) -> ModelState:
    return init_state(tiny_config(variant=variant, **overrides), seed_streams(seed).init)


def test_encode_input_layout():
    x = encode_input(np.array([[1.0, 2.0], [3.0, 4.0]]), (3, 5))
    assert x.shape == (2, 3, 5, 4)
    np.testing.assert_array_equal(x[1, 2, 4, :2], [3.0, 4.0])
    assert x[0, 0, 4, 2] == 1.0
    assert x[0, 2, 0, 3] == 1.0
    assert x[0, 1, 0, 3] == 0.5


def test_encode_input_needs_sensors():
    with pytest.raises(ShapeError):
        encode_input(np.zeros((2, 0)), (4, 4))


def _tanh_gelu(x):
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def test_fno_layer_trivial_weights(rng):
    v = rng.normal(size=(8, 8, 2))
    zero_r = ComplexTensor.zeros((2, 2, 2, 2))
    zero_b = ad.constant(np.zeros(2))
    dead = fno_layer(ad.constant(v), zero_r, ad.constant(np.zeros((2, 2))), zero_b)
    np.testing.assert_array_equal(dead.value, 0.0)
    bypass = fno_layer(ad.constant(v), zero_r, ad.constant(np.eye(2)), zero_b)
    np.testing.assert_allclose(bypass.value, _tanh_gelu(v), atol=1e-12)


def test_fno_layer_matches_reference_composition(rng):
    v = rng.normal(size=(8, 8, 2))
    r = rng.normal(size=(2, 2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2, 2))
    w = rng.normal(size=(2, 2))
    b = rng.normal(size=2)
    out = fno_layer(ad.constant(v), ComplexTensor.constant(r), ad.constant(w), ad.constant(b))

    spectrum = np.fft.rfft2(v, axes=(0, 1))
    rows = [0, 7]
    block = spectrum[rows][:, :2]
    padded = np.zeros_like(spectrum)
    padded[rows, :2] = np.einsum("xyoc,xyc->xyo", r, block)
    spectral = np.fft.irfft2(padded, s=(8, 8), axes=(0, 1))
    expected = _tanh_gelu(v @ w.T + spectral + b)
    np.testing.assert_allclose(out.value, expected, atol=1e-12)


@pytest.mark.parametrize("variant", list(ModelVariant))
def test_forward_shapes(variant):
    state = _state(variant)
    sensors = np.linspace(-1.0, 1.0, 3)
    assert forward(state, 1, sensors).shape == (8, 8)
    batch = np.stack([sensors, -sensors])
    out = forward(state, 0, batch)
    assert out.shape == (2, 8, 8)
    np.testing.assert_allclose(out[1], forward(state, 0, -sensors), atol=1e-12)


def test_forward_leaves_params_writable():
    state = _state()
    forward(state, 0, np.zeros(3))
    bind(state)
    assert all(value.flags.writeable for value in state.params.values())
    state.params["proj.1.bias"][0] = 0.5


def test_forward_validates_inputs():
    state = _state()
    with pytest.raises(ContractError):
        forward(state, 2, np.zeros(3))
    with pytest.raises(ShapeError):
        forward(state, 0, np.zeros(4))


def test_tasks_differ_but_share_weights():
    state = _state()
    sensors = np.array([0.3, -0.2, 0.5])
    assert not np.allclose(forward(state, 0, sensors), forward(state, 1, sensors))


def test_same_seed_same_state():
    a, b = _state(seed=3), _state(seed=3)
    assert a.params.keys() == b.params.keys()
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])
    assert not np.array_equal(a.params["lift.0.weight"], _state(seed=4).params["lift.0.weight"])


def test_initial_amplitudes_are_near_one():
    state = _state()
    network = MtlFnoNetwork(state.config, bind(state, requires_grad=False))
    weight = network.spectral_weight(0, 0).value
    np.testing.assert_allclose(np.linalg.svd(weight, compute_uv=False), 1.0, atol=1e-2)


def test_param_partition_of_tiny_model():
    counts = count_params(_state())
    # per layer: k factors 2*2*(4+3+4+4), p factors 2*(4+3+4), lambdas 4, W 16, b 4
    assert counts.per_task == [212, 212]
    assert counts.total == counts.shared + 424
    noshare = count_params(_state(ModelVariant.NOSHARE))
    assert noshare.per_task == [0, 0]


def test_default_param_counts():
    single = init_state(ModelConfig(n_tasks=1, variant=ModelVariant.NOSHARE), seed_streams(0).init)
    assert count_params(single).total == 2_110_753
    for n_tasks, total, ratio in ((5, 2_201_697, 0.209), (3, 2_176_737, 0.344)):
        mtl = count_params(init_state(ModelConfig(n_tasks=n_tasks), seed_streams(0).init))
        assert mtl.total == total
        assert mtl.per_task == [4 * 3120] * n_tasks
        assert mtl.total / (n_tasks * 2_110_753) == pytest.approx(ratio, abs=5e-4)


def test_noshare_is_smaller_than_full():
    full = count_params(init_state(ModelConfig(n_tasks=4), seed_streams(0).init))
    noshare = count_params(init_state(ModelConfig(n_tasks=4, variant=ModelVariant.NOSHARE), seed_streams(0).init))
    assert noshare.total < full.total


def test_task_names_must_match_task_count():
    with pytest.raises(ContractError):
        init_state(tiny_config(), seed_streams(0).init, ["only-one"])


@pytest.mark.parametrize(
    "name",
    [
        "layers.0.K_share.re",
        "layers.0.K_share.im",
        "layers.0.P_share",
        "tasks.0.layers.0.k_factors.0.re",
        "tasks.0.layers.0.k_factors.1.im",
        "tasks.0.layers.0.k_factors.2.re",
        "tasks.0.layers.0.k_factors.3.im",
        "tasks.0.layers.0.p_factors.0",
        "tasks.0.layers.0.p_factors.1",
        "tasks.0.layers.0.p_factors.2",
        "tasks.0.layers.0.lambda_k",
        "tasks.0.layers.0.lambda_p",
        "tasks.0.layers.0.W",
        "tasks.0.layers.0.b",
        "lift.0.weight",
        "proj.1.bias",
    ],
)
def test_network_gradient_matches_finite_difference(name):
    state = _state(width=2, hidden=4, n_layers=1, rank=1)
    sensors = np.array([[0.1, -0.4, 0.7]])

    def loss_at(value: np.ndarray) -> float:
        trial = state.copy()
        trial.params[name] = value
        return float(np.sum(forward(trial, 0, sensors) ** 2))

    nodes = bind(state)
    out = MtlFnoNetwork(state.config, nodes).forward(0, sensors)
    grads = ad.backward(ad.sum(ad.mul(out, out)), nodes)
    numeric = finite_difference(loss_at, state.params[name])
    error = np.linalg.norm(grads[name] - numeric)
    assert error <= 1e-3 * np.linalg.norm(numeric) + 1e-8


def _vanilla_fno(params: dict, sensors: np.ndarray) -> np.ndarray:
    def affine(x, name):
        return x @ params[f"{name}.weight"].T + params[f"{name}.bias"]

    rows = [0, 1, 6, 7]
    v = affine(_tanh_gelu(affine(encode_input(sensors, (8, 8)), "lift.0")), "lift.1")
    for layer in range(2):
        base = f"layers.{layer}"
        r = params[f"{base}.R_share.re"] + 1j * params[f"{base}.R_share.im"]
        spectrum = np.fft.rfft2(v, axes=(0, 1))
        padded = np.zeros_like(spectrum)
        padded[rows, :3] = np.einsum("xyoc,xyc->xyo", r, spectrum[rows][:, :3])
        spectral = np.fft.irfft2(padded, s=(8, 8), axes=(0, 1))
        v = _tanh_gelu(v @ params[f"{base}.W"].T + spectral + params[f"{base}.b"])
    return affine(_tanh_gelu(affine(v, "proj.0")), "proj.1")[..., 0]


def test_single_task_noshare_is_a_plain_fno():
    state = _state(ModelVariant.NOSHARE, n_tasks=1)
    sensors = np.array([0.4, -0.1, 0.9])
    np.testing.assert_allclose(forward(state, 0, sensors), _vanilla_fno(state.params, sensors), atol=1e-12)


def test_other_task_params_never_reach_a_task():
    state = _state()
    sensors = np.array([0.3, -0.2, 0.5])
    before = forward(state, 0, sensors)
    changed = state.copy()
    for name in changed.task_param_names(1):
        changed.params[name] = changed.params[name] + 0.25
    np.testing.assert_array_equal(forward(changed, 0, sensors), before)

    nodes = bind(state)
    out = MtlFnoNetwork(state.config, nodes).forward(0, sensors)
    grads = ad.backward(ad.sum(ad.mul(out, out)), nodes)
    for name in state.task_param_names(1):
        np.testing.assert_array_equal(grads[name], 0.0)
    assert any(np.any(grads[name] != 0.0) for name in state.task_param_names(0))


def _band_limited(height: int, width: int) -> np.ndarray:
    x = np.arange(height)[:, None] / height
    y = np.arange(width)[None, :] / width
    field = np.zeros((height, width, 2))
    for kx, ky, channel, amplitude, phase in [
        (0, 0, 0, 0.7, 0.0),
        (1, 0, 0, 1.2, 0.3),
        (1, 2, 1, -0.8, 1.1),
        (-1, 1, 1, 0.5, -0.4),
        (0, 2, 0, 0.9, 2.0),
    ]:
        field[..., channel] += amplitude * np.cos(2.0 * np.pi * (kx * x + ky * y) + phase)
    return field


def test_spectral_path_is_resolution_consistent(rng):
    weight = ComplexTensor.constant(rng.normal(size=(4, 3, 2, 2)) + 1j * rng.normal(size=(4, 3, 2, 2)))
    coarse = spectral_path(ad.constant(_band_limited(8, 8)), weight).value
    fine = spectral_path(ad.constant(_band_limited(16, 16)), weight).value
    np.testing.assert_allclose(fine[::2, ::2], coarse, atol=1e-6)
