"""Joint two-quantile training loop and checkpointing.

The loss sums the pinball losses of the median track (level 0.5) and the
upper track (level 0.9) over every sample and horizon step, then divides
by the batch size; minimizing it drives the two head outputs toward the
50th and 90th conditional quantiles.  Optimization is AdamW with the
decoupled weight-decay update from :mod:`peakcast.numerics.optim`.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data.pipeline import make_batches
from .data.schema import Dataset
from .model import Forecaster, ModelConfig
from .numerics import (
    RngStream,
    ShapeError,
    Tensor,
    adamw_step,
    as_tensor,
    clip_grad_norm,
    collect_grads,
    derive_seed,
    init_optimizer,
    ops,
    zero_grads,
)


class TrainingError(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 512
    epochs: int = 50
    weight_decay: float = 0.0
    grad_clip_norm: float | None = None
    seed: int = 0
    early_stop: bool = False
    early_stop_patience: int = 3
    optimizer: str = "adamw"

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise ValueError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be at least 1, got {self.batch_size}")
        if self.optimizer != "adamw":
            raise ValueError(f"unsupported optimizer '{self.optimizer}'")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "weight_decay": self.weight_decay,
            "grad_clip_norm": self.grad_clip_norm,
            "seed": self.seed,
            "early_stop": self.early_stop,
            "early_stop_patience": self.early_stop_patience,
            "optimizer": self.optimizer,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config fields: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    seconds: float
    param_norm: float


@dataclass
class TrainHistory:
    """Wall-clock seconds live only in memory: persisted artifacts must be
    byte-identical across same-seed runs, so serialization drops timing."""

    epochs: list[EpochStats] = field(default_factory=list)

    def losses(self) -> list[float]:
        return [e.mean_loss for e in self.epochs]

    def total_seconds(self) -> float:
        return sum(e.seconds for e in self.epochs)

    def to_dict(self) -> dict:
        return {
            "epochs": [
                {"epoch": e.epoch, "mean_loss": e.mean_loss, "param_norm": e.param_norm}
                for e in self.epochs
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainHistory":
        return cls(
            epochs=[
                EpochStats(int(e["epoch"]), float(e["mean_loss"]), 0.0, float(e["param_norm"]))
                for e in d.get("epochs", [])
            ]
        )

    def write_csv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss"])
            for e in self.epochs:
                w.writerow([e.epoch, repr(e.mean_loss)])


def quantile_loss(y, p50, p90) -> Tensor:
    """Joint pinball loss of both quantile tracks, averaged over samples.

    Per element: 0.5*max(y-p50, 0) + 0.5*max(p50-y, 0)
               + 0.9*max(y-p90, 0) + 0.1*max(p90-y, 0),
    summed over batch and horizon, divided by the batch size.  The
    subgradient at each kink is 0.
    """
    y, p50, p90 = as_tensor(y), as_tensor(p50), as_tensor(p90)
    if y.shape != p50.shape or y.shape != p90.shape:
        raise ShapeError(
            "quantile_loss", f"shapes differ: y {y.shape}, p50 {p50.shape}, p90 {p90.shape}"
        )
    d50 = y - p50
    d90 = y - p90
    total = (
        ops.sum_all(0.5 * ops.relu(d50))
        + ops.sum_all(0.5 * ops.relu(-d50))
        + ops.sum_all(0.9 * ops.relu(d90))
        + ops.sum_all(0.1 * ops.relu(-d90))
    )
    batch = y.shape[0] if y.ndim > 0 else 1
    return total * (1.0 / batch)


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    dataset: Dataset,
) -> tuple[Forecaster, TrainHistory]:
    """Seeded full-batch-sweep training; deterministic given both seeds."""
    train_config.validate()
    model = Forecaster(model_config)
    if (
        dataset.schema.lookback != model_config.lookback
        or dataset.schema.horizon != model_config.horizon
        or dataset.schema.d_observed != model_config.d_observed
        or dataset.schema.d_context != model_config.d_context
    ):
        raise ShapeError(
            "train",
            f"dataset schema (L={dataset.schema.lookback}, H={dataset.schema.horizon}, "
            f"d_b={dataset.schema.d_observed}, d_c={dataset.schema.d_context}) does not match "
            f"model config (L={model_config.lookback}, H={model_config.horizon}, "
            f"d_b={model_config.d_observed}, d_c={model_config.d_context})",
        )
    params = model.named_parameters()
    state = init_optimizer(
        params, lr=train_config.learning_rate, weight_decay=train_config.weight_decay
    )
    root = RngStream(train_config.seed, "train")
    history = TrainHistory()
    best_loss = float("inf")
    stale = 0
    for epoch in range(1, train_config.epochs + 1):
        started = time.perf_counter()
        batches = make_batches(
            dataset, train_config.batch_size, derive_seed(train_config.seed, f"epoch{epoch}")
        )
        losses = []
        for i, batch in enumerate(batches):
            rng = root.child(f"epoch{epoch}/batch{i}")
            zero_grads(params)
            out = model.forward(batch, training=True, rng=rng)
            loss = quantile_loss(batch.target, out.p50, out.p90)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {i}")
            loss.backward()
            grads = collect_grads(params)
            if train_config.grad_clip_norm is not None:
                grads = clip_grad_norm(grads, train_config.grad_clip_norm)
            adamw_step(params, grads, state)
            losses.append(loss_value)
        param_norm = float(np.sqrt(sum(float((p.values**2).sum()) for p in params.values())))
        mean_loss = float(np.mean(losses))
        history.epochs.append(
            EpochStats(epoch, mean_loss, time.perf_counter() - started, param_norm)
        )
        if train_config.early_stop:
            if mean_loss < best_loss - 1e-12:
                best_loss = mean_loss
                stale = 0
            else:
                stale += 1
                if stale >= train_config.early_stop_patience:
                    break
    return model, history


# -- checkpointing ---------------------------------------------------------------


def save_checkpoint(model: Forecaster, history: TrainHistory, path) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "model_config": model.config.to_dict(),
        "params": {
            name: {"shape": list(p.shape), "values": p.values.ravel().tolist()}
            for name, p in model.named_parameters().items()
        },
        "history": history.to_dict(),
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_checkpoint(path) -> tuple[Forecaster, TrainHistory]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with path.open("r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e}") from None
    if not isinstance(doc, dict) or "version" not in doc:
        raise CheckpointError(f"corrupt checkpoint {path}: missing version field")
    if doc["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {doc['version']} unsupported (expected {CHECKPOINT_VERSION})"
        )
    try:
        config = ModelConfig.from_dict(doc["model_config"])
        model = Forecaster(config)
        params = model.named_parameters()
        stored = doc["params"]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e}") from None
    if set(stored) != set(params):
        missing = sorted(set(params) - set(stored))
        extra = sorted(set(stored) - set(params))
        raise CheckpointError(
            f"checkpoint parameters do not match config: missing {missing[:3]}, extra {extra[:3]}"
        )
    for name, p in params.items():
        entry = stored[name]
        values = np.asarray(entry["values"], dtype=np.float64)
        if list(p.shape) != list(entry["shape"]) or values.size != p.size:
            raise CheckpointError(
                f"checkpoint parameter '{name}' has shape {entry['shape']}, expected {list(p.shape)}"
            )
        p.values = values.reshape(p.shape)
    history = TrainHistory.from_dict(doc.get("history", {}))
    return model, history
