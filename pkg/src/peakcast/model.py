"""Forecaster assembly: embeddings, aligned encoder/decoder, calibration, head.

Pipeline per batch: embed features; run encoder blocks (alignment
attention with residual+norm, then residual self-attention) over the
observed-series stream; translate the encoded lookback into a horizon-
length decoder initialization; run decoder blocks against the future
context; map each horizon step to the two quantile tracks; finally apply
the multiplicative calibration factor derived from the raw future context.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from .attention import AlignmentAttention, AttentionTrace, HorizonTranslator, SelfAttentionBlock
from .data.pipeline import Batch, make_batches
from .data.schema import FeatureSchema
from .embedding import FeatureEmbedding
from .layers import LayerNorm, Linear
from .numerics import RngStream, ShapeError, Tensor, ops


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    lookback: int
    horizon: int
    static_cardinalities: tuple[int, ...]
    d_observed: int
    d_context: int
    d_hidden: int = 60
    n_heads: int = 1
    dropout_static: float = 0.5
    dropout_other: float = 0.1
    n_encoder_blocks: int = 1
    n_decoder_blocks: int = 1
    calib_hidden: int = 32
    conv_kernel_size: int = 3
    conv_dilations: tuple[int, ...] = (1, 2)
    use_alignment: bool = True
    use_self_attention: bool = True
    use_calibration: bool = True
    seed: int = 0

    @property
    def d_static(self) -> int:
        return len(self.static_cardinalities)

    def validate(self) -> None:
        positive = {
            "lookback": self.lookback,
            "horizon": self.horizon,
            "d_observed": self.d_observed,
            "d_context": self.d_context,
            "d_hidden": self.d_hidden,
            "n_heads": self.n_heads,
            "n_encoder_blocks": self.n_encoder_blocks,
            "n_decoder_blocks": self.n_decoder_blocks,
            "calib_hidden": self.calib_hidden,
            "conv_kernel_size": self.conv_kernel_size,
        }
        for label, v in positive.items():
            if v < 1:
                raise ConfigError(f"{label} must be positive, got {v}")
        if not self.static_cardinalities or any(c < 1 for c in self.static_cardinalities):
            raise ConfigError(f"invalid static cardinalities {self.static_cardinalities}")
        if self.d_hidden % self.n_heads != 0:
            raise ConfigError(f"d_hidden {self.d_hidden} not divisible by n_heads {self.n_heads}")
        if self.lookback % self.n_heads != 0:
            raise ConfigError(
                f"lookback {self.lookback} not divisible by n_heads {self.n_heads} "
                "(required by the horizon translator)"
            )
        for p, label in ((self.dropout_static, "dropout_static"), (self.dropout_other, "dropout_other")):
            if not 0.0 <= p < 1.0:
                raise ConfigError(f"{label} must be in [0, 1), got {p}")
        if any(d < 1 for d in self.conv_dilations) or not self.conv_dilations:
            raise ConfigError(f"invalid conv dilations {self.conv_dilations}")

    @classmethod
    def from_schema(cls, schema: FeatureSchema, **overrides) -> "ModelConfig":
        cfg = cls(
            lookback=schema.lookback,
            horizon=schema.horizon,
            static_cardinalities=schema.static_cardinalities,
            d_observed=schema.d_observed,
            d_context=schema.d_context,
            **overrides,
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "lookback": self.lookback,
            "horizon": self.horizon,
            "static_cardinalities": list(self.static_cardinalities),
            "d_observed": self.d_observed,
            "d_context": self.d_context,
            "d_hidden": self.d_hidden,
            "n_heads": self.n_heads,
            "dropout_static": self.dropout_static,
            "dropout_other": self.dropout_other,
            "n_encoder_blocks": self.n_encoder_blocks,
            "n_decoder_blocks": self.n_decoder_blocks,
            "calib_hidden": self.calib_hidden,
            "conv_kernel_size": self.conv_kernel_size,
            "conv_dilations": list(self.conv_dilations),
            "use_alignment": self.use_alignment,
            "use_self_attention": self.use_self_attention,
            "use_calibration": self.use_calibration,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        required = {"lookback", "horizon", "static_cardinalities", "d_observed", "d_context"}
        missing = required - set(d)
        if missing:
            raise ConfigError(f"missing model config fields: {sorted(missing)}")
        kwargs = dict(d)
        kwargs["static_cardinalities"] = tuple(d["static_cardinalities"])
        if "conv_dilations" in d:
            kwargs["conv_dilations"] = tuple(d["conv_dilations"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def with_ablation(self, variant: str) -> "ModelConfig":
        flags = ABLATION_VARIANTS.get(variant)
        if flags is None:
            raise ConfigError(
                f"unknown ablation variant '{variant}'; choose from {sorted(ABLATION_VARIANTS)}"
            )
        return replace(self, **flags)


ABLATION_VARIANTS: dict[str, dict] = {
    "full": {},
    "no_alignment": {"use_alignment": False},
    "no_self_attention": {"use_self_attention": False},
    "no_calibration": {"use_calibration": False},
}


@dataclass
class ForecastOutput:
    """Per-horizon quantile tracks; tensors during training, arrays from predict."""

    p50: object  # Tensor inside a forward graph, np.ndarray after .numpy()
    p90: object
    series_ids: list[str] | None = None
    traces: dict[str, AttentionTrace] | None = None

    def numpy(self) -> "ForecastOutput":
        def arr(x):
            return x.values.copy() if isinstance(x, Tensor) else np.asarray(x)

        return ForecastOutput(
            p50=arr(self.p50), p90=arr(self.p90), series_ids=self.series_ids, traces=self.traces
        )


class CalibrationMlp:
    """Horizon-step scaling factors from raw future context, bounded to (-1, 1).

    The output layer starts at zero so training begins at the identity
    calibration (factor 0, multiplier 1).
    """

    def __init__(self, d_context: int, d_hidden: int, rng: RngStream, name: str = "calib"):
        self.name = name
        self.hidden = Linear(d_context, d_hidden, rng, f"{name}/hidden")
        self.out = Linear(d_hidden, 1, rng, f"{name}/out", zero_init=True)

    def __call__(self, context_future) -> Tensor:
        h = ops.relu(self.hidden(ops.as_tensor(context_future)))
        return ops.tanh(self.out(h))  # [B, H, 1]

    def named_parameters(self):
        yield from self.hidden.named_parameters()
        yield from self.out.named_parameters()


class TransformBlock:
    """One encoder or decoder stage: aligned attention, then self-attention.

    Both sub-layers are wrapped with dropout-on-attention, a residual from
    the incoming stream, and layer normalization.  Ablation flags drop a
    sub-layer entirely (parameters included).
    """

    def __init__(self, config: ModelConfig, rng: RngStream, name: str):
        self.name = name
        self.dropout_p = config.dropout_other
        self.align = None
        self.align_norm = None
        self.self_attention = None
        if config.use_alignment:
            self.align = AlignmentAttention(config.d_hidden, config.n_heads, rng, f"{name}/align")
            self.align_norm = LayerNorm(config.d_hidden, f"{name}/align_norm")
        if config.use_self_attention:
            self.self_attention = SelfAttentionBlock(
                config.d_hidden, config.n_heads, config.dropout_other, rng, f"{name}/self"
            )

    def __call__(self, stream, context_emb, static_emb, training, rng, traces):
        if self.align is not None:
            attn, trace = self.align(stream, context_emb, static_emb)
            attn = ops.dropout(attn, self.dropout_p, training, rng)
            stream = self.align_norm(stream + attn)
            if traces is not None:
                traces[f"{self.name}/align"] = trace
        if self.self_attention is not None:
            stream, trace = self.self_attention(stream, training, rng)
            if traces is not None:
                traces[f"{self.name}/self"] = trace
        return stream

    def named_parameters(self):
        if self.align is not None:
            yield from self.align.named_parameters()
            yield from self.align_norm.named_parameters()
        if self.self_attention is not None:
            yield from self.self_attention.named_parameters()


class Forecaster:
    """The full model; construction is deterministic given config.seed."""

    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        rng = RngStream(config.seed, "init")
        self.embedding = FeatureEmbedding(config, rng)
        self.encoder_blocks = [
            TransformBlock(config, rng, f"encoder{i}") for i in range(config.n_encoder_blocks)
        ]
        self.translator = HorizonTranslator(
            config.lookback, config.horizon, config.n_heads, rng
        )
        self.decoder_blocks = [
            TransformBlock(config, rng, f"decoder{i}") for i in range(config.n_decoder_blocks)
        ]
        self.head = Linear(config.d_hidden, 2, rng, "head")
        self.calibration = (
            CalibrationMlp(config.d_context, config.calib_hidden, rng)
            if config.use_calibration
            else None
        )

    # -- parameters ------------------------------------------------------------

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        chunks = [self.embedding.named_parameters(), self.translator.named_parameters()]
        for block in self.encoder_blocks + self.decoder_blocks:
            chunks.append(block.named_parameters())
        chunks.append(self.head.named_parameters())
        if self.calibration is not None:
            chunks.append(self.calibration.named_parameters())
        for chunk in chunks:
            for name, tensor in chunk:
                if name in out:
                    raise ConfigError(f"duplicate parameter name '{name}'")
                out[name] = tensor
        return out

    def count_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    # -- forward ---------------------------------------------------------------

    def _check_batch(self, batch: Batch) -> None:
        c = self.config
        b = batch.observed.shape[0]
        checks = [
            ("observed history", batch.observed.shape, (b, c.lookback, c.d_observed)),
            ("known context", batch.context.shape, (b, c.lookback + c.horizon, c.d_context)),
            ("static features", batch.static.shape, (b, c.d_static)),
        ]
        for stage, got, want in checks:
            if tuple(got) != want:
                raise ShapeError("forward", f"{stage}: expected shape {want}, got {got}")

    def forward(
        self,
        batch: Batch,
        training: bool = False,
        rng: RngStream | None = None,
        collect_traces: bool = False,
    ) -> ForecastOutput:
        c = self.config
        self._check_batch(batch)
        if training and rng is None and (c.dropout_static > 0 or c.dropout_other > 0):
            raise ValueError("training-mode forward with dropout needs an rng stream")
        traces: dict[str, AttentionTrace] | None = {} if collect_traces else None

        e_static = self.embedding.embed_static(batch.static, training, rng)
        stream = self.embedding.embed_observed(Tensor(batch.observed), training, rng)
        ctx_past, ctx_future = self.embedding.embed_context(batch.context, training, rng)

        for block in self.encoder_blocks:
            stream = block(stream, ctx_past, e_static, training, rng, traces)

        decoder_stream, trace = self.translator(stream)
        if traces is not None:
            traces["translate"] = trace

        for block in self.decoder_blocks:
            decoder_stream = block(decoder_stream, ctx_future, e_static, training, rng, traces)

        raw = self.head(decoder_stream)  # [B, H, 2]
        if self.calibration is not None:
            factor = self.calibration(batch.context[:, c.lookback :, :])  # [B, H, 1]
            calibrated = raw * (1.0 + factor)
        else:
            calibrated = raw
        b = batch.observed.shape[0]
        p50 = ops.reshape(ops.slice_last(calibrated, 0, 1), (b, c.horizon))
        p90 = ops.reshape(ops.slice_last(calibrated, 1, 2), (b, c.horizon))
        return ForecastOutput(p50=p50, p90=p90, series_ids=list(batch.series_ids), traces=traces)

    # -- inference -------------------------------------------------------------

    def predict(self, dataset, batch_size: int = 64) -> ForecastOutput:
        """Deterministic, order-preserving forecasts for every sample.

        Values are independent of batch size (same graph per sample).
        """
        if dataset.schema.lookback != self.config.lookback or dataset.schema.horizon != self.config.horizon:
            raise ShapeError(
                "predict",
                f"dataset windows (L={dataset.schema.lookback}, H={dataset.schema.horizon}) do not "
                f"match model (L={self.config.lookback}, H={self.config.horizon})",
            )
        if len(dataset) == 0:
            empty = np.zeros((0, self.config.horizon))
            return ForecastOutput(p50=empty, p90=empty.copy(), series_ids=[])
        p50s, p90s, ids = [], [], []
        for batch in make_batches(dataset, batch_size, shuffle_seed=None):
            out = self.forward(batch, training=False).numpy()
            p50s.append(out.p50)
            p90s.append(out.p90)
            ids.extend(out.series_ids)
        return ForecastOutput(
            p50=np.concatenate(p50s, axis=0), p90=np.concatenate(p90s, axis=0), series_ids=ids
        )


def init_model(config: ModelConfig) -> Forecaster:
    return Forecaster(config)


def count_parameters(model: Forecaster) -> int:
    return model.count_parameters()
