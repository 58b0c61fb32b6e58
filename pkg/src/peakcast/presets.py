"""Shipped configuration presets.

``reference_*`` carries the full-scale production hyperparameters (hidden
width 60, one head, dropout 0.5 on static embeddings and 0.1 elsewhere,
AdamW at lr 1e-3, batch 512, no early stopping).  ``desk_*`` shrinks the
budget so the shipped synthetic experiment trains in minutes on a laptop
CPU while keeping the same architecture.
"""

from __future__ import annotations

from .data.schema import FeatureSchema
from .model import ModelConfig
from .training import TrainConfig


def reference_model_config(schema: FeatureSchema, seed: int = 0) -> ModelConfig:
    return ModelConfig.from_schema(
        schema,
        d_hidden=60,
        n_heads=1,
        dropout_static=0.5,
        dropout_other=0.1,
        n_encoder_blocks=1,
        n_decoder_blocks=1,
        calib_hidden=32,
        seed=seed,
    )


def reference_train_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(
        learning_rate=1e-3,
        batch_size=512,
        epochs=50,
        weight_decay=0.0,
        seed=seed,
        early_stop=False,
        optimizer="adamw",
    )


def desk_model_config(schema: FeatureSchema, seed: int = 0) -> ModelConfig:
    return ModelConfig.from_schema(
        schema,
        d_hidden=32,
        n_heads=1,
        dropout_static=0.5,
        dropout_other=0.1,
        calib_hidden=16,
        seed=seed,
    )


def desk_train_config(seed: int = 0) -> TrainConfig:
    # clipping keeps small-batch training out of the high-loss plateau some
    # seeds otherwise fall into; 30 epochs lets the event response converge
    return TrainConfig(
        learning_rate=1e-3,
        batch_size=64,
        epochs=30,
        weight_decay=0.0,
        grad_clip_norm=1.0,
        seed=seed,
        early_stop=False,
        optimizer="adamw",
    )
