"""Splitting, per-sample scaling, and batching contracts."""

import numpy as np
import pytest

from peakcast.data import (
    DataError,
    SCALE_FLOOR,
    SplitError,
    generate_synthetic,
    inverse_normalize,
    make_batches,
    normalize,
    split_by_time,
)
from peakcast.data.schema import Sample

from conftest import micro_generator_config


@pytest.fixture(scope="module")
def world():
    cfg = micro_generator_config(n_series=30, train_origins_per_series=2)
    return cfg, generate_synthetic(cfg)


# -- split_by_time ---------------------------------------------------------------


def test_split_disjoint_and_exhaustive(world):
    cfg, ds = world
    train, test = split_by_time(ds, cfg.test_origin())
    assert len(train) + len(test) == len(ds)
    train_keys = {(s.series_id, s.origin_time) for s in train.samples}
    test_keys = {(s.series_id, s.origin_time) for s in test.samples}
    assert not train_keys & test_keys


def test_split_no_target_leakage(world):
    cfg, ds = world
    boundary = cfg.test_origin()
    train, test = split_by_time(ds, boundary)
    H = ds.schema.horizon
    assert all(s.origin_time + H <= boundary for s in train.samples)
    assert all(s.origin_time >= boundary for s in test.samples)
    last_train_target = max(s.origin_time + H for s in train.samples)
    first_test_origin = min(s.origin_time for s in test.samples)
    assert last_train_target <= first_test_origin


def test_sample_exactly_at_boundary_goes_to_test(world):
    cfg, ds = world
    t_star = cfg.test_origin()
    _, test = split_by_time(ds, t_star)
    assert any(s.origin_time == t_star for s in test.samples)


def test_boundary_after_everything_errors(world):
    cfg, ds = world
    with pytest.raises(SplitError, match="no test samples"):
        split_by_time(ds, cfg.total_weeks + 50)


def test_boundary_before_everything_errors(world):
    cfg, ds = world
    with pytest.raises(SplitError, match="no training samples"):
        split_by_time(ds, 0)


def test_straddling_sample_rejected(world):
    cfg, ds = world
    some = ds.samples[0]
    with pytest.raises(SplitError, match="straddles"):
        split_by_time(ds, some.origin_time + 1)


# -- normalize ---------------------------------------------------------------------


def test_constant_lookback_scales_to_one(world):
    cfg, ds = world
    s = ds.samples[0]
    tweaked = Sample(
        series_id=s.series_id,
        static=s.static,
        observed=np.column_stack([np.full(cfg.lookback, 5.0), s.observed[:, 1]]),
        context=s.context,
        target=s.target,
        origin_time=s.origin_time,
    )
    one = ds.replace_samples([tweaked])
    scaled, scalers = normalize(one)
    assert scalers.values[0] == 5.0
    assert np.allclose(scaled.samples[0].observed[:, 0], 1.0)


def test_scaler_is_lookback_mean():
    cfg = micro_generator_config(n_series=3, test_fraction=0.0)
    ds = generate_synthetic(cfg)
    s = ds.samples[0]
    demand = np.zeros(cfg.lookback)
    demand[:2] = [2.0, 4.0]
    demand[2:] = 3.0  # mean stays 3.0
    tweaked = Sample(s.series_id, s.static, np.column_stack([demand, s.observed[:, 1]]),
                     s.context, s.target, s.origin_time)
    _, scalers = normalize(ds.replace_samples([tweaked]))
    assert scalers.values[0] == 3.0


def test_normalize_roundtrip(world):
    cfg, ds = world
    scaled, scalers = normalize(ds)
    back = inverse_normalize(scaled, scalers)
    for a, b in zip(ds.samples, back.samples):
        np.testing.assert_allclose(b.observed, a.observed, rtol=1e-12)
        np.testing.assert_allclose(b.target, a.target, rtol=1e-12)
        assert np.array_equal(a.context, b.context)


def test_all_zero_lookback_flagged_and_floored(world):
    cfg, ds = world
    s = ds.samples[0]
    zeroed = Sample(s.series_id, s.static, np.zeros_like(s.observed), s.context,
                    s.target, s.origin_time)
    scaled, scalers = normalize(ds.replace_samples([zeroed, ds.samples[1]]))
    assert scalers.flagged == [0]
    assert scalers.values[0] == SCALE_FLOOR


def test_context_left_unscaled(world):
    cfg, ds = world
    scaled, _ = normalize(ds)
    for a, b in zip(ds.samples, scaled.samples):
        assert np.array_equal(a.context, b.context)


# -- make_batches -------------------------------------------------------------------


def test_batch_sizes_with_partial_tail(world):
    cfg, ds = world
    ten = ds.replace_samples(ds.samples[:10])
    batches = make_batches(ten, 4, shuffle_seed=0)
    assert [b.size for b in batches] == [4, 4, 2]


def test_batch_shapes(world):
    cfg, ds = world
    b = make_batches(ds, 8, shuffle_seed=1)[0]
    L, H = cfg.lookback, cfg.horizon
    assert b.observed.shape == (8, L, ds.schema.d_observed)
    assert b.context.shape == (8, L + H, ds.schema.d_context)
    assert b.static.shape == (8, ds.schema.d_static)
    assert b.target.shape == (8, H)
    assert len(b.series_ids) == 8 and b.origin_times.shape == (8,)


def test_shuffle_determinism(world):
    cfg, ds = world
    one = [b.series_ids for b in make_batches(ds, 7, shuffle_seed=9)]
    two = [b.series_ids for b in make_batches(ds, 7, shuffle_seed=9)]
    other = [b.series_ids for b in make_batches(ds, 7, shuffle_seed=10)]
    assert one == two
    assert one != other


def test_none_seed_keeps_order(world):
    cfg, ds = world
    batches = make_batches(ds, 5, shuffle_seed=None)
    flat = [sid for b in batches for sid in b.series_ids]
    assert flat == [s.series_id for s in ds.samples]


def test_batching_errors(world):
    cfg, ds = world
    with pytest.raises(DataError, match="batch_size"):
        make_batches(ds, 0, shuffle_seed=None)
    with pytest.raises(DataError, match="empty"):
        make_batches(ds.replace_samples([]), 4, shuffle_seed=None)
