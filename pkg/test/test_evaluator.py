import dataclasses

import numpy as np
import pytest

from mtlfno.core.errors import ContractError, NumericError, ShapeError
from mtlfno.core.seeding import seed_streams
from mtlfno.controller.evaluator import (
    build_report,
    check_unitarity,
    evaluate,
    flop_estimate,
    inference_time_ms,
    predict,
    regression_metrics,
    unitarity_report,
)
from mtlfno.controller.network import forward, init_state
from mtlfno.model.config import ModelConfig, ModelVariant
from conftest import tiny_config


def test_perfect_prediction():
    target = np.arange(18.0).reshape(2, 3, 3)
    metrics = regression_metrics(target.copy(), target, "potential")
    assert metrics.mse == 0.0
    assert metrics.mae == 0.0
    assert metrics.r2 == 1.0
    assert metrics.n_samples == 2


def test_mean_prediction_has_zero_r2():
    target = np.arange(18.0).reshape(2, 3, 3)
    metrics = regression_metrics(np.full_like(target, target.mean()), target)
    assert metrics.r2 == pytest.approx(0.0)
    assert metrics.mae == pytest.approx(np.mean(np.abs(target - target.mean())))


def test_constant_target_leaves_r2_undefined():
    metrics = regression_metrics(np.zeros((1, 2, 2)), np.ones((1, 2, 2)))
    assert metrics.r2 is None
    assert metrics.r2_undefined
    assert metrics.mse == 1.0


def test_metric_input_validation():
    with pytest.raises(ShapeError):
        regression_metrics(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)))
    with pytest.raises(ContractError):
        regression_metrics(np.zeros((0, 2, 2)), np.zeros((0, 2, 2)))


def test_predictions_are_in_field_units(dataset):
    state = init_state(tiny_config(), seed_streams(0).init)
    task = dataset.tasks[0]
    out = predict(state, 0, task, "test", batch_size=2)
    assert out.shape == task.test_fields.shape
    stats = task.require_stats()
    sensors, _ = task.normalized("test")
    np.testing.assert_allclose((out - stats.field_mean) / stats.field_std, forward(state, 0, sensors), atol=1e-10)
    metrics = evaluate(state, task, 0, "test")
    assert metrics.task == task.name
    assert metrics.n_samples == task.n_test


def test_flop_estimate_grows_with_layers():
    assert flop_estimate(ModelConfig(n_layers=4)) > flop_estimate(ModelConfig(n_layers=2)) > 0


def test_inference_time_takes_a_median(dataset):
    state = init_state(tiny_config(), seed_streams(0).init)
    sensors, _ = dataset.tasks[0].normalized("test")
    assert inference_time_ms(state, 0, sensors, repeats=3) > 0.0


def test_build_report(dataset):
    state = init_state(tiny_config(), seed_streams(0).init, dataset.task_names)
    report = build_report(state, dataset.tasks, "test", repeats=20)
    assert [m.task for m in report.tasks] == ["potential", "grad_x"]
    assert report.params == report.shared_params + sum(report.per_task_params)
    assert report.gflops > 0
    assert report.to_dict()["variant"] == "full"
    with pytest.raises(ContractError):
        build_report(state, dataset.tasks[:1])


def test_fresh_full_model_is_unitary():
    state = init_state(tiny_config(), seed_streams(0).init, ["a", "b"])
    report = unitarity_report(state)
    assert report.note == ""
    assert len(report.entries) == 2 * 2
    assert report.max_deviation < 1e-8
    assert all(entry.residual < 1e-8 for entry in report.entries)


@pytest.mark.parametrize(
    "variant, note",
    [
        (ModelVariant.NOCAYLEY, "no unitarity guarantee"),
        (ModelVariant.NOPOLAR, "no unitary factor"),
        (ModelVariant.NOSHARE, "no unitary factor"),
    ],
)
def test_unconstrained_variants_are_labelled(variant, note):
    state = init_state(tiny_config(variant=variant), seed_streams(0).init)
    report = unitarity_report(state)
    assert report.note == note
    assert report.variant == str(variant)
    assert len(report.entries) == 4


def test_hand_computed_metrics():
    metrics = regression_metrics(np.array([[[1.0, 2.0, 4.0]]]), np.array([[[1.0, 2.0, 3.0]]]))
    assert metrics.r2 == pytest.approx(0.5)
    assert metrics.mse == pytest.approx(1 / 3)
    assert metrics.mae == pytest.approx(1 / 3)


@pytest.mark.parametrize("scale, shift", [(2.5, 0.0), (-0.3, 4.0), (1e3, -7.5)])
def test_r2_is_affine_invariant(rng, scale, shift):
    target = rng.normal(size=(4, 8, 8))
    pred = target + 0.3 * rng.normal(size=(4, 8, 8))
    base = regression_metrics(pred, target).r2
    moved = regression_metrics(scale * pred + shift, scale * target + shift).r2
    assert moved == pytest.approx(base, abs=1e-10)


def _drifted_report(variant=ModelVariant.FULL, drift=1e-3):
    report = unitarity_report(init_state(tiny_config(variant=variant), seed_streams(0).init, ["a", "b"]))
    first, *rest = report.entries
    return dataclasses.replace(report, entries=[dataclasses.replace(first, mean_min_sv=1.0 - drift), *rest])


def test_check_unitarity_flags_drift():
    check_unitarity(_drifted_report(drift=1e-9))
    with pytest.raises(NumericError) as info:
        check_unitarity(_drifted_report(drift=1e-3))
    assert info.value.tensor_name == "layers.0[a]"


def test_check_unitarity_skips_unconstrained_variants():
    check_unitarity(_drifted_report(ModelVariant.NOCAYLEY, drift=0.5))
