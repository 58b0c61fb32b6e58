"""Dataset containers: per-sample feature windows and their schema."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """A dataset or sample violates its invariants."""


@dataclass(frozen=True)
class FeatureSchema:
    """Column layout shared by every sample of a dataset.

    ``observed_names[0]`` is the demand series itself; the one-hot event
    flag columns of the context block are listed in ``event_columns``.
    """

    lookback: int
    horizon: int
    static_names: tuple[str, ...]
    static_cardinalities: tuple[int, ...]
    observed_names: tuple[str, ...]
    context_names: tuple[str, ...]
    event_columns: tuple[str, ...] = ()

    @property
    def d_static(self) -> int:
        return len(self.static_names)

    @property
    def d_observed(self) -> int:
        return len(self.observed_names)

    @property
    def d_context(self) -> int:
        return len(self.context_names)

    def validate(self) -> None:
        if self.lookback < 1 or self.horizon < 1:
            raise DataError(f"window sizes must be positive: L={self.lookback}, H={self.horizon}")
        if len(self.static_names) != len(self.static_cardinalities):
            raise DataError("static_names and static_cardinalities differ in length")
        if any(c < 1 for c in self.static_cardinalities):
            raise DataError(f"cardinalities must be positive: {self.static_cardinalities}")
        if not self.observed_names:
            raise DataError("at least one observed covariate (demand) is required")
        unknown = set(self.event_columns) - set(self.context_names)
        if unknown:
            raise DataError(f"event columns not in context columns: {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {
            "lookback": self.lookback,
            "horizon": self.horizon,
            "static_names": list(self.static_names),
            "static_cardinalities": list(self.static_cardinalities),
            "observed_names": list(self.observed_names),
            "context_names": list(self.context_names),
            "event_columns": list(self.event_columns),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        schema = cls(
            lookback=int(d["lookback"]),
            horizon=int(d["horizon"]),
            static_names=tuple(d["static_names"]),
            static_cardinalities=tuple(int(c) for c in d["static_cardinalities"]),
            observed_names=tuple(d["observed_names"]),
            context_names=tuple(d["context_names"]),
            event_columns=tuple(d.get("event_columns", ())),
        )
        schema.validate()
        return schema


@dataclass
class Sample:
    """One forecasting instance anchored at ``origin_time``.

    ``observed`` covers weeks origin-L+1 .. origin, ``context`` covers
    origin-L+1 .. origin+H, and ``target`` holds demand for weeks
    origin+1 .. origin+H.
    """

    series_id: str
    static: np.ndarray  # [d_static] integer category codes
    observed: np.ndarray  # [L, d_observed]
    context: np.ndarray  # [L+H, d_context]
    target: np.ndarray  # [H]
    origin_time: int

    def validate(self, schema: FeatureSchema) -> None:
        L, H = schema.lookback, schema.horizon
        if self.static.shape != (schema.d_static,):
            raise DataError(
                f"sample {self.series_id}: static shape {self.static.shape}, "
                f"expected ({schema.d_static},)"
            )
        for j, card in enumerate(schema.static_cardinalities):
            v = int(self.static[j])
            if not 0 <= v < card:
                raise DataError(
                    f"sample {self.series_id}: static index {v} out of range "
                    f"for {schema.static_names[j]} (cardinality {card})"
                )
        if self.observed.shape != (L, schema.d_observed):
            raise DataError(
                f"sample {self.series_id}: observed shape {self.observed.shape}, "
                f"expected ({L}, {schema.d_observed})"
            )
        if self.context.shape != (L + H, schema.d_context):
            raise DataError(
                f"sample {self.series_id}: context shape {self.context.shape}, "
                f"expected ({L + H}, {schema.d_context})"
            )
        if self.target.shape != (H,):
            raise DataError(
                f"sample {self.series_id}: target shape {self.target.shape}, expected ({H},)"
            )
        if np.any(self.target < 0):
            raise DataError(f"sample {self.series_id}: negative demand in target")
        if np.any(self.observed[:, 0] < 0):
            raise DataError(f"sample {self.series_id}: negative demand in observed history")


@dataclass
class Dataset:
    """An immutable-by-convention list of samples sharing one schema."""

    samples: list[Sample]
    schema: FeatureSchema
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    def validate(self) -> None:
        self.schema.validate()
        for s in self.samples:
            s.validate(self.schema)

    def replace_samples(self, samples: list[Sample]) -> "Dataset":
        return Dataset(samples=samples, schema=self.schema, metadata=dict(self.metadata))
