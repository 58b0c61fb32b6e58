"""Weighted quantile-loss metrics, the ablation runner, and report emission.

Overall accuracy at level alpha is twice the summed pinball loss over all
samples and horizon steps divided by the summed absolute actuals.  The
target-date variant keeps only (sample, horizon) terms whose target week
equals the requested event week — both the numerator and, by default, the
denominator — so the metric stays scale-free per event.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data.pipeline import normalize, split_by_time
from .data.schema import Dataset
from .model import ABLATION_VARIANTS, Forecaster, ModelConfig
from .numerics import derive_seed
from .training import TrainConfig, train

ALPHA_LEVELS = (50, 90)


class MetricError(ValueError):
    pass


def pinball(actual: np.ndarray, predicted: np.ndarray, level: float) -> np.ndarray:
    """Elementwise pinball loss at quantile ``level`` in (0, 1)."""
    diff = actual - predicted
    return level * np.maximum(diff, 0.0) + (1.0 - level) * np.maximum(-diff, 0.0)


def _check_aligned(forecasts: np.ndarray, actuals: np.ndarray, alpha: int) -> tuple[np.ndarray, np.ndarray]:
    if alpha not in ALPHA_LEVELS:
        raise MetricError(f"alpha must be one of {ALPHA_LEVELS}, got {alpha}")
    f = np.asarray(forecasts, dtype=np.float64)
    y = np.asarray(actuals, dtype=np.float64)
    if f.shape != y.shape or f.ndim != 2:
        raise MetricError(f"forecasts {f.shape} and actuals {y.shape} must both be [N, H]")
    return f, y


def overall_accuracy(forecasts: np.ndarray, actuals: np.ndarray, alpha: int) -> float:
    """2 * sum(pinball) / sum(|y|) over every sample and horizon step."""
    f, y = _check_aligned(forecasts, actuals, alpha)
    denom = float(np.abs(y).sum())
    if denom == 0.0:
        raise MetricError("degenerate evaluation set: all actuals are zero")
    num = float(pinball(y, f, alpha / 100.0).sum())
    return 2.0 * num / denom


def event_mask(origin_times: np.ndarray, horizon: int, event_weeks) -> np.ndarray:
    """Boolean [N, H] mask of terms whose target week hits an event week."""
    origins = np.asarray(origin_times, dtype=np.int64)
    target_weeks = origins[:, None] + np.arange(1, horizon + 1)[None, :]
    weeks = np.atleast_1d(np.asarray(event_weeks, dtype=np.int64))
    return np.isin(target_weeks, weeks)


def target_date_accuracy(
    forecasts: np.ndarray,
    actuals: np.ndarray,
    alpha: int,
    event_week,
    origin_times: np.ndarray,
    full_denominator: bool = False,
) -> float:
    """Overall accuracy restricted to forecasts landing on the event week(s).

    ``full_denominator=True`` divides by the absolute actuals over all
    horizon steps instead of only the event-date terms.
    """
    f, y = _check_aligned(forecasts, actuals, alpha)
    mask = event_mask(origin_times, y.shape[1], event_week)
    if not mask.any():
        raise MetricError(f"no forecast lands on event week(s) {event_week}")
    num = float((pinball(y, f, alpha / 100.0) * mask).sum())
    denom = float(np.abs(y).sum()) if full_denominator else float((np.abs(y) * mask).sum())
    if denom == 0.0:
        raise MetricError(f"zero actuals at event week(s) {event_week}")
    return 2.0 * num / denom


def per_horizon_accuracy(forecasts: np.ndarray, actuals: np.ndarray, alpha: int) -> np.ndarray:
    """Overall accuracy computed separately at each horizon step; [H]."""
    f, y = _check_aligned(forecasts, actuals, alpha)
    num = pinball(y, f, alpha / 100.0).sum(axis=0)
    denom = np.abs(y).sum(axis=0)
    return np.where(denom > 0, 2.0 * num / np.where(denom > 0, denom, 1.0), np.nan)


# -- run records --------------------------------------------------------------


@dataclass
class MetricReport:
    """Metrics and provenance for one trained model on one evaluation set."""

    variant: str
    seed: int
    metrics: dict[str, float]
    horizon_curves: dict[str, list[float]]  # "p50"/"p90" -> H values
    sample_count: int
    denominator_mass: float
    config_digest: str
    wall_clock_seconds: float

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "seed": self.seed,
            "metrics": self.metrics,
            "horizon_curves": self.horizon_curves,
            "sample_count": self.sample_count,
            "denominator_mass": self.denominator_mass,
            "config_digest": self.config_digest,
            "wall_clock_seconds": self.wall_clock_seconds,
        }


@dataclass
class AblationReport:
    rows: list[MetricReport] = field(default_factory=list)
    summary: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "summary": self.summary,
            "metadata": self.metadata,
        }


def evaluate_forecasts(
    p50: np.ndarray,
    p90: np.ndarray,
    actuals: np.ndarray,
    origin_times: np.ndarray,
    event_weeks,
) -> tuple[dict[str, float], dict[str, list[float]]]:
    """Overall and event-date metrics plus per-horizon curves."""
    metrics = {
        "overall_p50": overall_accuracy(p50, actuals, 50),
        "overall_p90": overall_accuracy(p90, actuals, 90),
    }
    if len(np.atleast_1d(event_weeks)):
        metrics["event_p50"] = target_date_accuracy(p50, actuals, 50, event_weeks, origin_times)
        metrics["event_p90"] = target_date_accuracy(p90, actuals, 90, event_weeks, origin_times)
    curves = {
        "p50": [float(v) for v in per_horizon_accuracy(p50, actuals, 50)],
        "p90": [float(v) for v in per_horizon_accuracy(p90, actuals, 90)],
    }
    return metrics, curves


def evaluate_model(
    model: Forecaster,
    test_set: Dataset,
    event_weeks,
    batch_size: int = 64,
) -> tuple[dict[str, float], dict[str, list[float]], float]:
    """Normalize inputs per sample, predict, undo scaling, score in raw units."""
    scaled, scalers = normalize(test_set)
    out = model.predict(scaled, batch_size=batch_size)
    p50 = out.p50 * scalers.values[:, None]
    p90 = out.p90 * scalers.values[:, None]
    actuals = np.stack([s.target for s in test_set.samples])
    origins = np.array([s.origin_time for s in test_set.samples])
    metrics, curves = evaluate_forecasts(p50, p90, actuals, origins, event_weeks)
    return metrics, curves, float(np.abs(actuals).sum())


def _run_one(args) -> MetricReport:
    variant, run_seed, model_config, train_config, train_set, test_set, event_weeks = args
    started = time.perf_counter()
    model, _history = train(model_config, train_config, train_set)
    metrics, curves, denom = evaluate_model(model, test_set, event_weeks)
    return MetricReport(
        variant=variant,
        seed=run_seed,
        metrics=metrics,
        horizon_curves=curves,
        sample_count=len(test_set),
        denominator_mass=denom,
        config_digest=model_config.digest(),
        wall_clock_seconds=time.perf_counter() - started,
    )


def run_ablation(
    dataset: Dataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    boundary_week: int,
    event_weeks,
    variants=("full", "no_alignment", "no_self_attention", "no_calibration"),
    n_seeds: int = 3,
    jobs: int = 1,
) -> AblationReport:
    """Train every variant on identical data and seeds; report mean and sd.

    Runs are independent, so ``jobs > 1`` fans them out over processes;
    results are merged in a fixed (variant, seed) order either way.
    """
    for v in variants:
        if v not in ABLATION_VARIANTS:
            raise ValueError(f"unknown variant '{v}'; choose from {sorted(ABLATION_VARIANTS)}")
    if n_seeds < 1:
        raise ValueError(f"n_seeds must be at least 1, got {n_seeds}")
    train_raw, test_set = split_by_time(dataset, boundary_week)
    train_set, _ = normalize(train_raw)

    tasks = []
    for variant in variants:
        for k in range(n_seeds):
            model_seed = derive_seed(model_config.seed, f"model-{k}") % (2**31)
            train_seed = derive_seed(train_config.seed, f"train-{k}") % (2**31)
            v_model = replace(model_config.with_ablation(variant), seed=model_seed)
            v_train = replace(train_config, seed=train_seed)
            tasks.append((variant, k, v_model, v_train, train_set, test_set, list(event_weeks)))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_one, tasks))
    else:
        rows = [_run_one(t) for t in tasks]

    report = AblationReport(rows=rows)
    metric_names = sorted({m for r in rows for m in r.metrics})
    for variant in variants:
        values = {m: [r.metrics[m] for r in rows if r.variant == variant] for m in metric_names}
        report.summary[variant] = {
            m: {"mean": float(np.mean(v)), "sd": float(np.std(v))} for m, v in values.items() if v
        }
    report.metadata = {
        "n_seeds": n_seeds,
        "variants": list(variants),
        "boundary_week": boundary_week,
        "event_weeks": list(event_weeks),
        "train_samples": len(train_set),
        "test_samples": len(test_set),
    }
    return report


def emit_report(report: AblationReport, out_dir) -> list[Path]:
    """Write metrics.json, metrics.csv (summary table) and horizon_curves.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    json_path = out_dir / "metrics.json"
    with json_path.open("w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
    written.append(json_path)

    csv_path = out_dir / "metrics.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "metric", "mean", "sd"])
        for variant, metrics in report.summary.items():
            for metric, stats in sorted(metrics.items()):
                w.writerow([variant, metric, repr(stats["mean"]), repr(stats["sd"])])
    written.append(csv_path)

    curves_path = out_dir / "horizon_curves.csv"
    with curves_path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "seed", "horizon", "p50", "p90"])
        for row in report.rows:
            p50c, p90c = row.horizon_curves["p50"], row.horizon_curves["p90"]
            for h, (a, b) in enumerate(zip(p50c, p90c), start=1):
                w.writerow([row.variant, row.seed, h, repr(a), repr(b)])
    written.append(curves_path)
    return written
