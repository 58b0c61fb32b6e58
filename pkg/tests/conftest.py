"""Shared fixtures: micro datasets and configs sized for fast tests."""

from __future__ import annotations

from dataclasses import replace

import pytest

from peakcast.data import generate_synthetic
from peakcast.data.synthetic import CalendarEvent, GeneratorConfig
from peakcast.model import ModelConfig


def micro_generator_config(**overrides) -> GeneratorConfig:
    """Tiny world: L=8, H=4, 16 weeks, 6 series, one event id."""
    cfg = GeneratorConfig(
        n_series=6,
        total_weeks=16,
        lookback=8,
        horizon=4,
        n_categories=3,
        category_sensitivity=(0.0, 0.8, 1.5),
        base_log_mean=1.5,
        base_log_sd=0.5,
        seasonal_amplitude=0.2,
        event_calendar=(CalendarEvent(6, "A", 0.5), CalendarEvent(13, "A", 0.5)),
        event_amplitude=2.0,
        noise_log_sd=0.1,
        seed=5,
        test_fraction=0.34,
    )
    return replace(cfg, **overrides)


@pytest.fixture(scope="session")
def micro_dataset():
    return generate_synthetic(micro_generator_config())


@pytest.fixture()
def micro_model_config(micro_dataset) -> ModelConfig:
    return ModelConfig.from_schema(
        micro_dataset.schema, d_hidden=8, n_heads=1, calib_hidden=8, seed=3
    )
