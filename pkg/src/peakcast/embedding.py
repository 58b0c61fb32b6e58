"""Feature embedding: raw inputs to fixed-width latent sequences.

Static categorical features are looked up, regularized with heavy dropout
and projected to the hidden width.  Temporal features (observed history
and known context) get token embeddings from a causal dilated-convolution
stack plus a learned positional table.  The known-context block is split
into its lookback and horizon parts *before* embedding, each part with
its own kernels and positional table, so the historical embedding can
never depend on horizon values.
"""

from __future__ import annotations

import numpy as np

from .layers import Linear, small_normal, uniform_fan_in, zeros
from .numerics import RngStream, ShapeError, Tensor, ops


class StaticEmbedding:
    """Categorical lookup -> dropout -> linear projection to d_hidden."""

    def __init__(
        self,
        cardinalities: tuple[int, ...],
        d_embed: int,
        d_hidden: int,
        dropout_p: float,
        rng: RngStream,
        name: str = "embed/static",
    ):
        self.name = name
        self.dropout_p = dropout_p
        self.tables = [
            small_normal(rng, f"{name}/table{j}", (card, d_embed))
            for j, card in enumerate(cardinalities)
        ]
        self.proj = Linear(len(cardinalities) * d_embed, d_hidden, rng, f"{name}/proj")

    def __call__(self, static_idx: np.ndarray, training: bool, rng) -> Tensor:
        if static_idx.ndim != 2 or static_idx.shape[1] != len(self.tables):
            raise ShapeError(
                "static_embedding",
                f"expected [B, {len(self.tables)}] indices, got {static_idx.shape}",
            )
        looked = [
            ops.embedding_lookup(table, static_idx[:, j]) for j, table in enumerate(self.tables)
        ]
        e = looked[0] if len(looked) == 1 else ops.concat_last(looked)
        e = ops.dropout(e, self.dropout_p, training, rng)
        return self.proj(e)

    def named_parameters(self):
        for j, t in enumerate(self.tables):
            yield f"{self.name}/table{j}", t
        yield from self.proj.named_parameters()


class TokenEmbedding:
    """Causal dilated conv stack + positional table + dropout for one segment."""

    def __init__(
        self,
        d_in: int,
        d_hidden: int,
        length: int,
        rng: RngStream,
        name: str,
        kernel_size: int = 3,
        dilations: tuple[int, ...] = (1, 2),
        dropout_p: float = 0.1,
    ):
        self.name = name
        self.length = length
        self.dropout_p = dropout_p
        self.dilations = dilations
        self.kernels = []
        self.biases = []
        width = d_in
        for i, _ in enumerate(dilations):
            fan_in = kernel_size * width
            self.kernels.append(
                uniform_fan_in(rng, f"{name}/conv{i}/K", (kernel_size, width, d_hidden), fan_in)
            )
            self.biases.append(zeros((d_hidden,)))
            width = d_hidden
        self.positions = small_normal(rng, f"{name}/pos", (length, d_hidden))

    def __call__(self, x, training: bool, rng) -> Tensor:
        x = ops.as_tensor(x) if not isinstance(x, Tensor) else x
        if x.ndim != 3 or x.shape[1] != self.length:
            raise ShapeError(
                "token_embedding",
                f"{self.name}: expected [B, {self.length}, d], got {x.shape}",
            )
        h = x
        last = len(self.kernels) - 1
        for i, (kernel, bias, dil) in enumerate(zip(self.kernels, self.biases, self.dilations)):
            h = ops.dilated_conv1d(h, kernel, dil) + bias
            if i < last:
                h = ops.relu(h)
        h = h + self.positions
        return ops.dropout(h, self.dropout_p, training, rng)

    def named_parameters(self):
        for i, (k, b) in enumerate(zip(self.kernels, self.biases)):
            yield f"{self.name}/conv{i}/K", k
            yield f"{self.name}/conv{i}/b", b
        yield f"{self.name}/pos", self.positions


class FeatureEmbedding:
    """All four embedding outputs share the hidden width d_hidden."""

    def __init__(self, config, rng: RngStream):
        self.lookback = config.lookback
        self.horizon = config.horizon
        self.static = StaticEmbedding(
            config.static_cardinalities,
            d_embed=config.d_hidden,
            d_hidden=config.d_hidden,
            dropout_p=config.dropout_static,
            rng=rng,
        )
        self.observed = TokenEmbedding(
            config.d_observed,
            config.d_hidden,
            config.lookback,
            rng,
            "embed/observed",
            kernel_size=config.conv_kernel_size,
            dilations=config.conv_dilations,
            dropout_p=config.dropout_other,
        )
        self.context_past = TokenEmbedding(
            config.d_context,
            config.d_hidden,
            config.lookback,
            rng,
            "embed/context_past",
            kernel_size=config.conv_kernel_size,
            dilations=config.conv_dilations,
            dropout_p=config.dropout_other,
        )
        self.context_future = TokenEmbedding(
            config.d_context,
            config.d_hidden,
            config.horizon,
            rng,
            "embed/context_future",
            kernel_size=config.conv_kernel_size,
            dilations=config.conv_dilations,
            dropout_p=config.dropout_other,
        )

    def embed_static(self, static_idx: np.ndarray, training: bool, rng) -> Tensor:
        return self.static(static_idx, training, rng)

    def embed_observed(self, observed, training: bool, rng) -> Tensor:
        return self.observed(observed, training, rng)

    def embed_context(self, context, training: bool, rng) -> tuple[Tensor, Tensor]:
        """Split the known-context block at the lookback boundary, then embed."""
        values = context.values if isinstance(context, Tensor) else np.asarray(context, dtype=float)
        L, H = self.lookback, self.horizon
        if values.ndim != 3 or values.shape[1] != L + H:
            raise ShapeError(
                "context_embedding", f"expected [B, {L + H}, d], got {values.shape}"
            )
        past = self.context_past(Tensor(values[:, :L]), training, rng)
        future = self.context_future(Tensor(values[:, L:]), training, rng)
        return past, future

    def named_parameters(self):
        yield from self.static.named_parameters()
        yield from self.observed.named_parameters()
        yield from self.context_past.named_parameters()
        yield from self.context_future.named_parameters()


def broadcast_static(e_static: Tensor, steps: int) -> Tensor:
    """Copy a [B, d] static embedding along a new time axis: [B, steps, d]."""
    return ops.broadcast_time(e_static, steps)
