"""Quantile loss oracle checks, the training loop, and checkpoints."""

import json
from dataclasses import replace

import numpy as np
import pytest

from peakcast.data import generate_synthetic, make_batches, normalize
from peakcast.model import Forecaster, ModelConfig
from peakcast.numerics import RngStream, ShapeError, Tensor, adamw_step, collect_grads, init_optimizer, zero_grads
from peakcast.training import (
    CheckpointError,
    TrainConfig,
    TrainingError,
    load_checkpoint,
    quantile_loss,
    save_checkpoint,
    train,
)

from conftest import micro_generator_config


def pinball_reference(y, p50, p90):
    """Independent elementwise loop implementation of the joint loss."""
    y, p50, p90 = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (y, p50, p90))
    total = 0.0
    for i in range(y.shape[0]):
        for h in range(y.shape[1]):
            d1 = y[i, h] - p50[i, h]
            d2 = y[i, h] - p90[i, h]
            total += 0.5 * max(d1, 0.0) + 0.5 * max(-d1, 0.0)
            total += 0.9 * max(d2, 0.0) + 0.1 * max(-d2, 0.0)
    return total / y.shape[0]


@pytest.fixture(scope="module")
def train_world():
    cfg = micro_generator_config(n_series=24, test_fraction=0.0)
    ds = generate_synthetic(cfg)
    scaled, _ = normalize(ds)
    model_cfg = ModelConfig.from_schema(scaled.schema, d_hidden=8, calib_hidden=8, seed=3)
    return scaled, model_cfg


# -- quantile loss -----------------------------------------------------------------


def test_perfect_prediction_is_zero():
    assert quantile_loss(np.array([1.0]), np.array([1.0]), np.array([1.0])).item() == 0.0


def test_median_underforecast_hand_case():
    # only the P50 track errs: 0.5 * |1 - 0| = 0.5
    loss = quantile_loss(np.array([1.0]), np.array([0.0]), np.array([1.0]))
    assert loss.item() == 0.5


def test_upper_overforecast_hand_case():
    # only the P90 track errs on the over side: 0.1 * 1 = 0.1
    loss = quantile_loss(np.array([0.0]), np.array([0.0]), np.array([1.0]))
    assert loss.item() == 0.1


def test_nonnegative_and_zero_iff_exact():
    s = RngStream(3, "ql")
    for i in range(50):
        y = s.normal((4, 3))
        p50 = y + s.normal((4, 3)) * (i % 3)
        p90 = y + s.normal((4, 3)) * (i % 2)
        val = quantile_loss(y, p50, p90).item()
        assert val >= 0.0
        if np.array_equal(p50, y) and np.array_equal(p90, y):
            assert val == 0.0
        if val == 0.0:
            assert np.array_equal(p50, y) and np.array_equal(p90, y)


def test_upper_track_asymmetry_is_nine_to_one():
    m = 0.37
    under = quantile_loss(np.array([m]), np.array([m]), np.array([0.0])).item()
    over = quantile_loss(np.array([0.0]), np.array([0.0]), np.array([m])).item()
    np.testing.assert_allclose(under / over, 9.0, rtol=1e-12)


def test_matches_reference_on_random_triples():
    s = RngStream(11, "qlref")
    for _ in range(200):
        y, p50, p90 = s.normal((3, 5)), s.normal((3, 5)), s.normal((3, 5))
        ours = quantile_loss(y, p50, p90).item()
        np.testing.assert_allclose(ours, pinball_reference(y, p50, p90), atol=1e-12)


def test_loss_shape_mismatch():
    with pytest.raises(ShapeError, match="quantile_loss"):
        quantile_loss(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 4)))


def test_loss_gradient_at_kink_is_zero():
    y = np.array([[1.0, 2.0]])
    p50 = Tensor(np.array([[1.0, 1.5]]), requires_grad=True)  # exact tie at h=0
    p90 = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
    quantile_loss(y, p50, p90).backward()
    assert p50.grad[0, 0] == 0.0  # subgradient 0 at the kink
    assert p50.grad[0, 1] == -0.5  # under-forecast branch pushes the median up
    assert p90.grad[0, 0] == 0.0


# -- training loop --------------------------------------------------------------------


def test_zero_learning_rate_keeps_params(train_world):
    ds, model_cfg = train_world
    tc = TrainConfig(learning_rate=0.0, batch_size=8, epochs=2, seed=1)
    model, _ = train(model_cfg, tc, ds)
    fresh = Forecaster(model_cfg)
    for name, p in model.named_parameters().items():
        assert np.array_equal(p.values, fresh.named_parameters()[name].values)


def test_micro_run_loss_decreases(train_world):
    ds, model_cfg = train_world
    tc = TrainConfig(learning_rate=1e-3, batch_size=8, epochs=5, seed=1)
    _, hist = train(model_cfg, tc, ds)
    losses = hist.losses()
    assert len(losses) == 5
    assert losses[4] < losses[0]


def test_same_seed_identical_history_and_params(train_world):
    ds, model_cfg = train_world
    tc = TrainConfig(learning_rate=1e-3, batch_size=8, epochs=3, seed=7)
    m1, h1 = train(model_cfg, tc, ds)
    m2, h2 = train(model_cfg, tc, ds)
    assert h1.losses() == h2.losses()
    for name, p in m1.named_parameters().items():
        assert np.array_equal(p.values, m2.named_parameters()[name].values)


def test_different_train_seed_differs(train_world):
    ds, model_cfg = train_world
    tc = TrainConfig(learning_rate=1e-3, batch_size=8, epochs=2, seed=7)
    _, h1 = train(model_cfg, tc, ds)
    _, h2 = train(model_cfg, replace(tc, seed=8), ds)
    assert h1.losses() != h2.losses()


def test_single_small_step_decreases_frozen_batch_loss(train_world):
    ds, model_cfg = train_world
    model = Forecaster(model_cfg)
    batch = make_batches(ds, 8, shuffle_seed=None)[0]
    params = model.named_parameters()
    state = init_optimizer(params, lr=1e-5)

    def loss_value():
        out = model.forward(batch, training=False)
        return quantile_loss(batch.target, out.p50, out.p90)

    before = loss_value()
    zero_grads(params)
    before.backward()
    adamw_step(params, collect_grads(params), state)
    after = loss_value().item()
    assert after < before.item()


def test_non_finite_loss_aborts_with_location(train_world):
    ds, model_cfg = train_world
    tc = TrainConfig(learning_rate=1e160, batch_size=8, epochs=3, seed=1)
    with np.errstate(all="ignore"), pytest.raises(TrainingError, match=r"epoch \d+, batch \d+"):
        train(model_cfg, tc, ds)


def test_schema_mismatch_rejected(train_world):
    ds, model_cfg = train_world
    bad = replace(model_cfg, d_context=model_cfg.d_context + 1)
    with pytest.raises(ShapeError, match="train"):
        train(bad, TrainConfig(epochs=1, batch_size=8), ds)


def test_early_stop_halts(train_world):
    ds, model_cfg = train_world
    tc = TrainConfig(
        learning_rate=0.0, batch_size=8, epochs=10, seed=1, early_stop=True, early_stop_patience=2
    )
    _, hist = train(model_cfg, tc, ds)
    assert len(hist.epochs) < 10  # constant loss triggers patience


def test_train_config_validation():
    with pytest.raises(ValueError, match="epochs"):
        TrainConfig(epochs=0).validate()
    with pytest.raises(ValueError, match="optimizer"):
        TrainConfig(optimizer="sgd").validate()
    with pytest.raises(ValueError, match="unknown"):
        TrainConfig.from_dict({"nope": 1})


# -- checkpoints -------------------------------------------------------------------------


def test_checkpoint_roundtrip_bitwise(train_world, tmp_path):
    ds, model_cfg = train_world
    tc = TrainConfig(learning_rate=1e-3, batch_size=8, epochs=2, seed=2)
    model, hist = train(model_cfg, tc, ds)
    path = tmp_path / "ckpt.json"
    save_checkpoint(model, hist, path)
    loaded, hist2 = load_checkpoint(path)
    assert loaded.config == model.config
    for name, p in model.named_parameters().items():
        assert np.array_equal(p.values, loaded.named_parameters()[name].values)
    assert hist2.losses() == hist.losses()


def test_checkpoint_truncated_file(train_world, tmp_path):
    ds, model_cfg = train_world
    model = Forecaster(model_cfg)
    path = tmp_path / "ckpt.json"
    save_checkpoint(model, __import__("peakcast.training", fromlist=["TrainHistory"]).TrainHistory(), path)
    path.write_bytes(path.read_bytes()[: path.stat().st_size // 2])
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(path)


def test_checkpoint_version_mismatch(train_world, tmp_path):
    from peakcast.training import TrainHistory

    ds, model_cfg = train_world
    path = tmp_path / "ckpt.json"
    save_checkpoint(Forecaster(model_cfg), TrainHistory(), path)
    doc = json.loads(path.read_text())
    doc["version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_checkpoint_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "none.json")


def test_checkpoint_refuses_mismatched_dataset(train_world, tmp_path, micro_dataset):
    """A checkpoint trained on different window sizes cannot predict."""
    ds, model_cfg = train_world
    other_cfg = replace(model_cfg, lookback=6)
    path = tmp_path / "ckpt.json"
    from peakcast.training import TrainHistory

    save_checkpoint(Forecaster(other_cfg), TrainHistory(), path)
    model, _ = load_checkpoint(path)
    with pytest.raises(ShapeError, match="predict"):
        model.predict(micro_dataset)


def test_history_csv(train_world, tmp_path):
    ds, model_cfg = train_world
    tc = TrainConfig(learning_rate=1e-3, batch_size=8, epochs=3, seed=2)
    _, hist = train(model_cfg, tc, ds)
    path = tmp_path / "history.csv"
    hist.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,loss"
    assert len(lines) == 4
    assert hist.total_seconds() > 0  # timing stays in memory only
