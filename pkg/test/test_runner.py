import csv
import json
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
import pytest

from mtlfno.core.errors import ConfigError
from mtlfno.controller.runner import (
    evaluate_checkpoints,
    find_checkpoints,
    fit,
    reconcile_config,
    run_sweep,
    select_training,
    train_run,
    write_sweep_csv,
)
from mtlfno.local.synthetic import generate
from mtlfno.model.config import ModelConfig, ModelVariant, TrainConfig
from mtlfno.model.run import RunSpec, SweepAxis, TrainMode
from conftest import tiny_config, tiny_spec


def _spec(out: Path, **overrides) -> RunSpec:
    values = dict(
        out=out,
        model=tiny_config(),
        train=TrainConfig(epochs=1, batch_size=3, lr0=1e-2, seed=0),
    )
    values.update(overrides)
    return RunSpec(**values)


def test_reconcile_takes_extents_from_data(dataset):
    config = reconcile_config(ModelConfig(k1=4, k2=3, width=4, hidden=8, n_layers=1), dataset)
    assert (config.grid_h, config.grid_w, config.n_sensors, config.n_tasks) == (8, 8, 3, 2)
    with pytest.raises(ConfigError):
        reconcile_config(ModelConfig(), dataset)


def test_train_size_subsets_are_nested(dataset):
    small = select_training(dataset, 2, seed=0)
    large = select_training(dataset, 4, seed=0)
    for a, b in zip(small, large):
        np.testing.assert_array_equal(a.train_fields, b.train_fields[:2])
        assert a.n_test == dataset.tasks[0].n_test
    with pytest.raises(ConfigError):
        select_training(dataset, 7, seed=0)
    assert all(a is b for a, b in zip(select_training(dataset, None, seed=0), dataset.tasks))


def test_train_run_writes_artifacts(dataset):
    with TemporaryDirectory() as tmp:
        outcome = train_run(_spec(Path(tmp)), dataset, show_progress=False)
        run_dir = outcome.run_dir
        assert run_dir.name.endswith("_seed0")
        assert [p.name for p in outcome.checkpoints] == ["checkpoint.mtlf"]
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["variant"] == "full"
        assert manifest["rng"] == "numpy.random.PCG64"
        assert manifest["mtlfno_version"] == "0.1.0"
        assert len(manifest["history"][0]) == 1
        metrics = json.loads((run_dir / "metrics.json").read_text())
        assert [t["task"] for t in metrics["tasks"]] == ["potential", "grad_x"]
        with (run_dir / "losses.csv").open() as file:
            rows = list(csv.reader(file))
        assert rows[0] == ["epoch", "task", "loss"]
        assert len(rows) == 1 + 2

        report = evaluate_checkpoints(find_checkpoints(run_dir), dataset, "test", repeats=20)
        assert report.params == manifest["params"]["total"]


def test_variant_param_counts_differ(dataset):
    with TemporaryDirectory() as tmp:
        full = fit(_spec(Path(tmp)), dataset, show_progress=False).report
        noshare = fit(_spec(Path(tmp)).with_overrides(variant=ModelVariant.NOSHARE), dataset, show_progress=False).report
    assert noshare.params < full.params


def test_independent_mode_trains_one_model_per_task(dataset):
    with TemporaryDirectory() as tmp:
        outcome = train_run(_spec(Path(tmp), mode=TrainMode.INDEPENDENT), dataset, show_progress=False)
        names = sorted(p.name for p in outcome.checkpoints)
        assert names == ["checkpoint_grad_x.mtlf", "checkpoint_potential.mtlf"]
        single = outcome.fit.states[0]
        assert single.config.variant == ModelVariant.NOSHARE
        assert single.config.n_tasks == 1
        assert outcome.fit.report.params == 2 * outcome.fit.report.per_task_params[0]
        report = evaluate_checkpoints(find_checkpoints(outcome.run_dir), dataset)
    assert sorted(m.task for m in report.tasks) == ["grad_x", "potential"]


def test_rank_sweep_rows_and_determinism(dataset):
    spec = _spec(Path("unused"))
    rows = run_sweep(spec, dataset, SweepAxis.RANK, [1, 2], [0], show_progress=False)
    assert [(r.setting, r.task) for r in rows] == [
        (1, "potential"),
        (1, "grad_x"),
        (2, "potential"),
        (2, "grad_x"),
    ]
    again = run_sweep(spec, dataset, SweepAxis.RANK, [1, 2], [0], show_progress=False)
    with TemporaryDirectory() as tmp:
        write_sweep_csv(rows, Path(tmp) / "a.csv")
        write_sweep_csv(again, Path(tmp) / "b.csv")
        assert (Path(tmp) / "a.csv").read_bytes() == (Path(tmp) / "b.csv").read_bytes()


def test_train_size_sweep_rejects_oversized_values(dataset):
    with pytest.raises(ConfigError):
        run_sweep(_spec(Path("unused")), dataset, SweepAxis.TRAIN_SIZE, [2, 50], [0], show_progress=False)


def test_mismatched_checkpoint_is_a_config_error(dataset):
    other = generate(tiny_spec(tasks=["grad_y", "squared"]))
    with TemporaryDirectory() as tmp:
        outcome = train_run(_spec(Path(tmp)), dataset, show_progress=False)
        with pytest.raises(ConfigError):
            evaluate_checkpoints(outcome.checkpoints, other)
