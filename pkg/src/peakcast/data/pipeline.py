"""Time-based splitting, per-sample scaling, and batch assembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics.rng import RngStream
from .schema import DataError, Dataset, Sample

SCALE_FLOOR = 1e-3


class SplitError(ValueError):
    pass


def split_by_time(dataset: Dataset, boundary_week: int) -> tuple[Dataset, Dataset]:
    """Split so no training target crosses the boundary.

    Train keeps samples with ``origin + H <= boundary``; test keeps samples
    with ``origin >= boundary`` (a sample exactly at the boundary is test).
    A sample falling between those conditions would leak target weeks
    across the boundary and raises.
    """
    H = dataset.schema.horizon
    train: list[Sample] = []
    test: list[Sample] = []
    for s in dataset.samples:
        if s.origin_time >= boundary_week:
            test.append(s)
        elif s.origin_time + H <= boundary_week:
            train.append(s)
        else:
            raise SplitError(
                f"sample {s.series_id} at origin {s.origin_time} straddles "
                f"boundary {boundary_week} (horizon {H})"
            )
    if not train:
        raise SplitError(f"no training samples before boundary {boundary_week}")
    if not test:
        raise SplitError(f"no test samples at or after boundary {boundary_week}")
    return dataset.replace_samples(train), dataset.replace_samples(test)


@dataclass
class Scalers:
    """Per-sample divisors (mean lookback demand, floored) for undoing scaling."""

    values: np.ndarray  # [n_samples]
    flagged: list[int]  # indices whose lookback demand was all zero


def normalize(dataset: Dataset) -> tuple[Dataset, Scalers]:
    """Divide each sample's observed covariates and target by its own
    mean lookback demand (floored at SCALE_FLOOR).  Context features are
    left untouched; the discount column is already a fraction."""
    scalers = np.zeros(len(dataset))
    flagged: list[int] = []
    out: list[Sample] = []
    for i, s in enumerate(dataset.samples):
        mean_demand = float(s.observed[:, 0].mean())
        if mean_demand <= 0.0:
            flagged.append(i)
        scale = max(mean_demand, SCALE_FLOOR)
        scalers[i] = scale
        out.append(
            Sample(
                series_id=s.series_id,
                static=s.static.copy(),
                observed=s.observed / scale,
                context=s.context.copy(),
                target=s.target / scale,
                origin_time=s.origin_time,
            )
        )
    return dataset.replace_samples(out), Scalers(values=scalers, flagged=flagged)


def inverse_normalize(dataset: Dataset, scalers: Scalers) -> Dataset:
    if len(scalers.values) != len(dataset):
        raise DataError(
            f"scaler count {len(scalers.values)} does not match dataset size {len(dataset)}"
        )
    out: list[Sample] = []
    for s, scale in zip(dataset.samples, scalers.values):
        out.append(
            Sample(
                series_id=s.series_id,
                static=s.static.copy(),
                observed=s.observed * scale,
                context=s.context.copy(),
                target=s.target * scale,
                origin_time=s.origin_time,
            )
        )
    return dataset.replace_samples(out)


@dataclass
class Batch:
    """Samples stacked into dense arrays for one model invocation."""

    static: np.ndarray  # [B, d_static] int64
    observed: np.ndarray  # [B, L, d_observed]
    context: np.ndarray  # [B, L+H, d_context]
    target: np.ndarray  # [B, H]
    series_ids: list[str]
    origin_times: np.ndarray  # [B] int64

    @property
    def size(self) -> int:
        return len(self.series_ids)


def stack_samples(samples: list[Sample]) -> Batch:
    return Batch(
        static=np.stack([s.static for s in samples]),
        observed=np.stack([s.observed for s in samples]),
        context=np.stack([s.context for s in samples]),
        target=np.stack([s.target for s in samples]),
        series_ids=[s.series_id for s in samples],
        origin_times=np.array([s.origin_time for s in samples], dtype=np.int64),
    )


def make_batches(dataset: Dataset, batch_size: int, shuffle_seed: int | None) -> list[Batch]:
    """Stack samples into batches of ``batch_size`` (final batch may be short).

    ``shuffle_seed`` draws a seeded permutation; ``None`` keeps dataset order.
    """
    if batch_size < 1:
        raise DataError(f"batch_size must be at least 1, got {batch_size}")
    n = len(dataset)
    if n == 0:
        raise DataError("cannot batch an empty dataset")
    if shuffle_seed is None:
        order = np.arange(n)
    else:
        order = RngStream(shuffle_seed, "batch-shuffle").permutation(n)
    batches = []
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        batches.append(stack_samples([dataset.samples[i] for i in idx]))
    return batches
