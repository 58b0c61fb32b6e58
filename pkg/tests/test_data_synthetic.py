"""Generator contracts: determinism, event mechanics, config validation."""

import math
from dataclasses import replace

import numpy as np
import pytest

from peakcast.data import DataError, generate_synthetic
from peakcast.data.synthetic import CalendarEvent, desk_generator_config

from conftest import micro_generator_config


def sample_arrays_equal(a, b):
    return (
        a.series_id == b.series_id
        and a.origin_time == b.origin_time
        and np.array_equal(a.static, b.static)
        and np.array_equal(a.observed, b.observed)
        and np.array_equal(a.context, b.context)
        and np.array_equal(a.target, b.target)
    )


def test_same_config_and_seed_bitwise_identical():
    cfg = micro_generator_config(n_series=40)
    d1, d2 = generate_synthetic(cfg), generate_synthetic(cfg)
    assert len(d1) == len(d2)
    assert all(sample_arrays_equal(a, b) for a, b in zip(d1.samples, d2.samples))


def test_different_seed_differs():
    d1 = generate_synthetic(micro_generator_config(seed=1))
    d2 = generate_synthetic(micro_generator_config(seed=2))
    assert not np.array_equal(d1.samples[0].observed, d2.samples[0].observed)


def test_insensitive_category_unaffected_by_events():
    """Category with sensitivity 0: identical demand with the calendar on or off."""
    with_events = generate_synthetic(micro_generator_config(n_series=30))
    without = generate_synthetic(micro_generator_config(n_series=30, event_calendar=()))
    flag_col = with_events.schema.context_names.index("event_A")
    L = with_events.schema.lookback
    checked = sensitive = 0
    for a, b in zip(with_events.samples, without.samples):
        assert a.series_id == b.series_id and a.origin_time == b.origin_time
        lookback_flags = a.context[:L, flag_col] > 0
        horizon_flags = a.context[L:, flag_col] > 0
        if int(a.static[0]) == 0:  # sensitivity 0.0: multiplier is exactly 1
            assert np.array_equal(a.observed, b.observed)
            assert np.array_equal(a.target, b.target)
            checked += 1
        else:  # sensitive categories change exactly at event weeks
            obs_diff = a.observed[:, 0] != b.observed[:, 0]
            assert np.array_equal(obs_diff, lookback_flags)
            assert np.array_equal(a.target != b.target, horizon_flags)
            sensitive += 1
    assert checked > 0 and sensitive > 0


def test_zero_event_amplitude_means_no_spikes():
    """Without promo uplift, no week stands far above the series median."""
    cfg = replace(
        desk_generator_config(seed=3),
        n_series=1000,
        event_amplitude=0.0,
        train_origins_per_series=1,
        test_fraction=0.0,
    )
    ds = generate_synthetic(cfg)
    s_amp, noise_sd = cfg.seasonal_amplitude, cfg.noise_log_sd
    # demand = base * season * exp(eps): season <= 1+s_amp, eps <= 5 sd whp,
    # median >= (1-s_amp) * exp(-0.5 sd); combined bound below
    bound = (1 + s_amp) / (1 - s_amp) * math.exp(5.5 * noise_sd)
    ratios = []
    for s in ds.samples:
        demand = np.concatenate([s.observed[:, 0], s.target])
        ratios.append(demand.max() / np.median(demand))
    assert max(ratios) <= bound
    # contrast: with promo uplift on, sensitive series blow through the bound
    spiky = generate_synthetic(replace(cfg, event_amplitude=3.0))
    spikes = []
    for s in spiky.samples:
        if int(s.static[0]) == cfg.n_categories - 1:
            demand = np.concatenate([s.observed[:, 0], s.target])
            spikes.append(demand.max() / np.median(demand))
    assert np.median(spikes) > bound


def test_event_flags_match_calendar_exactly():
    cfg = micro_generator_config(n_series=20)
    ds = generate_synthetic(cfg)
    L = cfg.lookback
    calendar_weeks = {ev.week for ev in cfg.event_calendar}
    flag_col = ds.schema.context_names.index("event_A")
    for s in ds.samples:
        window = np.arange(s.origin_time - L + 1, s.origin_time + cfg.horizon + 1)
        expected = np.isin(window, list(calendar_weeks)).astype(float)
        assert np.array_equal(s.context[:, flag_col], expected)


def test_discount_column_matches_calendar():
    cfg = micro_generator_config(n_series=10)
    ds = generate_synthetic(cfg)
    disc_col = ds.schema.context_names.index("discount")
    by_week = {ev.week: ev.discount for ev in cfg.event_calendar}
    L = cfg.lookback
    for s in ds.samples:
        for r in range(L + cfg.horizon):
            week = s.origin_time - L + 1 + r
            assert s.context[r, disc_col] == by_week.get(week, 0.0)


def test_event_weeks_lift_demand_three_sigma():
    """Mean demand on event weeks exceeds adjacent non-event weeks (z > 3)."""
    cfg = replace(desk_generator_config(seed=11), n_series=400)
    ds = generate_synthetic(cfg)
    flag_cols = [ds.schema.context_names.index(c) for c in ds.schema.event_columns]
    event_vals, adjacent_vals = [], []
    L = cfg.lookback
    for s in ds.samples:
        demand = s.observed[:, 0]
        flags = s.context[:L, flag_cols].max(axis=1)
        for t in np.flatnonzero(flags > 0):
            event_vals.append(demand[t] / demand.mean())
            for u in (t - 1, t + 1):
                if 0 <= u < L and flags[u] == 0:
                    adjacent_vals.append(demand[u] / demand.mean())
    e, a = np.asarray(event_vals), np.asarray(adjacent_vals)
    z = (e.mean() - a.mean()) / math.sqrt(e.var() / len(e) + a.var() / len(a))
    assert z > 3.0


def test_all_values_non_negative_and_shapes():
    cfg = micro_generator_config(n_series=25)
    ds = generate_synthetic(cfg)
    ds.validate()
    L, H = cfg.lookback, cfg.horizon
    for s in ds.samples:
        assert s.observed.shape == (L, 2)
        assert s.context.shape == (L + H, ds.schema.d_context)
        assert s.target.shape == (H,)
        assert (s.observed >= 0).all() and (s.target >= 0).all()


def test_split_membership_flags():
    cfg = micro_generator_config(n_series=30, test_fraction=0.3)
    ds = generate_synthetic(cfg)
    t_star = cfg.test_origin()
    test_ids = {s.series_id for s in ds.samples if s.origin_time == t_star}
    train_ids = {s.series_id for s in ds.samples if s.origin_time != t_star}
    assert test_ids and train_ids
    assert not test_ids & train_ids  # disjoint by default
    shared = generate_synthetic(replace(cfg, share_series_across_split=True))
    shared_test = {s.series_id for s in shared.samples if s.origin_time == t_star}
    shared_train = {s.series_id for s in shared.samples if s.origin_time != t_star}
    assert shared_test == shared_train


def test_train_origins_within_legal_range():
    cfg = micro_generator_config(n_series=40, train_origins_per_series=3)
    ds = generate_synthetic(cfg)
    lo, hi = cfg.train_origin_range()
    t_star = cfg.test_origin()
    for s in ds.samples:
        assert s.origin_time == t_star or lo <= s.origin_time <= hi


def test_config_validation_errors():
    with pytest.raises(DataError, match="exceeds"):
        micro_generator_config(total_weeks=10).validate()
    with pytest.raises(DataError, match="discount"):
        micro_generator_config(event_calendar=(CalendarEvent(3, "A", 1.5),)).validate()
    with pytest.raises(DataError, match="duplicate"):
        micro_generator_config(
            event_calendar=(CalendarEvent(3, "A", 0.5), CalendarEvent(3, "A", 0.2))
        ).validate()
    with pytest.raises(DataError, match="per category"):
        micro_generator_config(category_sensitivity=(0.0,)).validate()
    with pytest.raises(DataError, match="seasonal"):
        micro_generator_config(seasonal_amplitude=1.0).validate()
    with pytest.raises(DataError, match="event week"):
        micro_generator_config(event_calendar=(CalendarEvent(99, "A", 0.5),)).validate()


def test_config_roundtrip_and_digest():
    cfg = micro_generator_config()
    from peakcast.data.synthetic import GeneratorConfig

    again = GeneratorConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.digest() == cfg.digest()
    with pytest.raises(DataError, match="unknown"):
        GeneratorConfig.from_dict({**cfg.to_dict(), "bogus": 1})
