"""Dataset serialization: canonical JSONL, wide CSV, and run manifests.

JSONL holds one sample object per line and round-trips exactly.  The CSV
is a human-inspectable wide table with one row per (series, week); rows
belonging to a sample's forecast-creation week carry ``is_origin = 1`` so
sample windows can be reconstructed.  Observed covariates other than
demand are unknown beyond the origin and left blank there.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .schema import Dataset, FeatureSchema, Sample


class ParseError(ValueError):
    """A dataset file violates the documented format."""

    def __init__(self, path, line: int | None, message: str):
        where = f"{path}" if line is None else f"{path}:{line}"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


_JSONL_KEYS = {"series_id", "static", "observed", "context", "target", "origin_time"}


def write_jsonl(dataset: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for s in dataset.samples:
            obj = {
                "series_id": s.series_id,
                "static": [int(v) for v in s.static],
                "observed": s.observed.tolist(),
                "context": s.context.tolist(),
                "target": s.target.tolist(),
                "origin_time": int(s.origin_time),
            }
            fh.write(json.dumps(obj, sort_keys=True, allow_nan=False))
            fh.write("\n")


def _load_jsonl(path, schema: FeatureSchema, ignore_columns=()) -> Dataset:
    samples: list[Sample] = []
    ignorable = set(ignore_columns)
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(path, lineno, f"invalid JSON: {e}") from None
            unknown = set(obj) - _JSONL_KEYS - ignorable
            if unknown:
                raise ParseError(path, lineno, f"unknown keys: {sorted(unknown)}")
            missing = _JSONL_KEYS - set(obj)
            if missing:
                raise ParseError(path, lineno, f"missing keys: {sorted(missing)}")
            try:
                sample = Sample(
                    series_id=str(obj["series_id"]),
                    static=np.asarray(obj["static"], dtype=np.int64),
                    observed=np.asarray(obj["observed"], dtype=np.float64),
                    context=np.asarray(obj["context"], dtype=np.float64),
                    target=np.asarray(obj["target"], dtype=np.float64),
                    origin_time=int(obj["origin_time"]),
                )
            except (TypeError, ValueError) as e:
                raise ParseError(path, lineno, f"ragged or non-numeric arrays: {e}") from None
            try:
                sample.validate(schema)
            except ValueError as e:
                raise ParseError(path, lineno, str(e)) from None
            samples.append(sample)
    return Dataset(samples=samples, schema=schema)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(dataset: Dataset, path) -> None:
    """Write the wide per-week table; overlapping sample windows must agree."""
    schema = dataset.schema
    L, H = schema.lookback, schema.horizon
    header = (
        ["series_id", "week", "is_origin"]
        + list(schema.observed_names)
        + list(schema.context_names)
        + list(schema.static_names)
    )
    # per series: week -> row fields; merged across samples
    per_series: dict[str, dict] = {}
    order: list[str] = []
    for s in dataset.samples:
        entry = per_series.get(s.series_id)
        if entry is None:
            entry = {"static": s.static, "weeks": {}, "origins": set()}
            per_series[s.series_id] = entry
            order.append(s.series_id)
        if not np.array_equal(entry["static"], s.static):
            raise ValueError(f"series {s.series_id}: inconsistent static features across samples")
        entry["origins"].add(s.origin_time)
        weeks = entry["weeks"]
        start = s.origin_time - L + 1
        for r in range(L + H):
            week = start + r
            ctx = s.context[r]
            if r < L:
                obs = s.observed[r]
                demand, rest = obs[0], obs[1:]
            else:
                demand, rest = s.target[r - L], None
            row = weeks.get(week)
            if row is None:
                weeks[week] = {"demand": demand, "rest": rest, "ctx": ctx}
            else:
                if row["ctx"] is not None and not np.array_equal(row["ctx"], ctx):
                    raise ValueError(
                        f"series {s.series_id} week {week}: conflicting context values"
                    )
                if row["demand"] is not None and demand is not None and row["demand"] != demand:
                    raise ValueError(
                        f"series {s.series_id} week {week}: conflicting demand values"
                    )
                if rest is not None and row["rest"] is None:
                    row["rest"] = rest
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for sid in order:
            entry = per_series[sid]
            for week in sorted(entry["weeks"]):
                row = entry["weeks"][week]
                rest = row["rest"]
                obs_cells = [_fmt(row["demand"])] + (
                    [_fmt(v) for v in rest]
                    if rest is not None
                    else [""] * (len(dataset.schema.observed_names) - 1)
                )
                w.writerow(
                    [sid, week, 1 if week in entry["origins"] else 0]
                    + obs_cells
                    + [_fmt(v) for v in row["ctx"]]
                    + [int(v) for v in entry["static"]]
                )


def _load_csv(path, schema: FeatureSchema, ignore_columns=()) -> Dataset:
    L, H = schema.lookback, schema.horizon
    expected = (
        ["series_id", "week", "is_origin"]
        + list(schema.observed_names)
        + list(schema.context_names)
        + list(schema.static_names)
    )
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        ignorable = set(ignore_columns)
        extra = [c for c in header if c not in expected and c not in ignorable]
        if extra:
            raise ParseError(path, 1, f"unexpected columns: {extra}")
        missing = [c for c in expected if c not in header]
        if missing:
            raise ParseError(path, 1, f"missing columns: {missing}")
        col = {name: header.index(name) for name in expected}

        series_rows: dict[str, dict] = {}
        order: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            sid = row[col["series_id"]]
            entry = series_rows.get(sid)
            if entry is None:
                entry = {"weeks": {}, "origins": [], "static": None, "line": lineno}
                series_rows[sid] = entry
                order.append(sid)
            try:
                week = int(row[col["week"]])
                demand_cell = row[col[schema.observed_names[0]]]
                demand = float(demand_cell) if demand_cell != "" else None
                rest = []
                for name in schema.observed_names[1:]:
                    cell = row[col[name]]
                    rest.append(float(cell) if cell != "" else np.nan)
                ctx = [float(row[col[name]]) for name in schema.context_names]
                static = [int(row[col[name]]) for name in schema.static_names]
                is_origin = int(row[col["is_origin"]])
            except ValueError as e:
                raise ParseError(path, lineno, f"bad cell: {e}") from None
            if demand is not None and demand < 0:
                raise ParseError(path, lineno, f"negative demand {demand} for series {sid}")
            if entry["static"] is None:
                entry["static"] = static
            elif entry["static"] != static:
                raise ParseError(path, lineno, f"series {sid}: static features change over time")
            if week in entry["weeks"]:
                raise ParseError(path, lineno, f"series {sid}: duplicate week {week}")
            entry["weeks"][week] = (demand, rest, ctx)
            if is_origin:
                entry["origins"].append(week)

    samples: list[Sample] = []
    for sid in order:
        entry = series_rows[sid]
        weeks = entry["weeks"]
        if len(weeks) < L + H:
            raise ParseError(
                path, entry["line"], f"series {sid} covers {len(weeks)} weeks, needs at least {L + H}"
            )
        for t in sorted(entry["origins"]):
            window = range(t - L + 1, t + H + 1)
            missing_weeks = [w for w in window if w not in weeks]
            if missing_weeks:
                raise ParseError(
                    path,
                    entry["line"],
                    f"series {sid} origin {t}: missing weeks {missing_weeks[:4]}",
                )
            observed = np.zeros((L, schema.d_observed))
            context = np.zeros((L + H, schema.d_context))
            target = np.zeros(H)
            for r, w in enumerate(window):
                demand, rest, ctx = weeks[w]
                context[r] = ctx
                if demand is None:
                    raise ParseError(path, entry["line"], f"series {sid} week {w}: missing demand")
                if r < L:
                    observed[r, 0] = demand
                    observed[r, 1:] = rest
                else:
                    target[r - L] = demand
            if np.isnan(observed).any():
                raise ParseError(
                    path, entry["line"], f"series {sid} origin {t}: missing observed covariates"
                )
            sample = Sample(
                series_id=sid,
                static=np.asarray(entry["static"], dtype=np.int64),
                observed=observed,
                context=context,
                target=target,
                origin_time=t,
            )
            try:
                sample.validate(schema)
            except ValueError as e:
                raise ParseError(path, entry["line"], str(e)) from None
            samples.append(sample)
    return Dataset(samples=samples, schema=schema)


def load_dataset(path, schema: FeatureSchema, ignore_columns=()) -> Dataset:
    """Load a dataset from ``.jsonl`` or ``.csv``, validating against ``schema``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    if path.suffix == ".jsonl":
        return _load_jsonl(path, schema, ignore_columns)
    if path.suffix == ".csv":
        return _load_csv(path, schema, ignore_columns)
    raise ParseError(path, None, f"unsupported dataset format '{path.suffix}'")


MANIFEST_VERSION = 1


def write_manifest(dataset: Dataset, config, path) -> None:
    doc = {
        "version": MANIFEST_VERSION,
        "seed": config.seed,
        "config": config.to_dict(),
        "config_digest": config.digest(),
        "schema": dataset.schema.to_dict(),
        "n_samples": len(dataset),
        "test_origin": config.test_origin(),
        "event_weeks": sorted(ev.week for ev in config.event_calendar),
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def read_manifest(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != MANIFEST_VERSION:
        raise ParseError(path, None, f"unsupported manifest version {doc.get('version')}")
    return doc
