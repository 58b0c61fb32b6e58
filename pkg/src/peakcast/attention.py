"""Multi-head attention and its three specialized wirings.

The alignment attention queries with the target-series stream and keys on
the known-context embedding concatenated with the broadcast static
embedding, so score weight lands on positions where context signals (e.g.
promo flags) explain demand.  Values concatenate all three sources.

The horizon translator turns encoder output into the decoder's
initialization: it transposes time and channels, runs self-attention over
the hidden channels (score shape d_hidden x d_hidden), layer-normalizes,
and linearly resizes the time axis from the lookback to the horizon
length.  There is no residual across the translator since its input and
output lengths differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .layers import LayerNorm, Linear
from .numerics import RngStream, ShapeError, Tensor, ops


@dataclass
class AttentionTrace:
    """Post-softmax score matrices per head, [B, n_heads, T_q, T_k]."""

    scores: np.ndarray
    query_len: int
    key_len: int


class MultiHeadAttention:
    """Scaled dot-product attention with per-source input projections."""

    def __init__(
        self,
        d_q_src: int,
        d_k_src: int,
        d_v_src: int,
        d_model: int,
        n_heads: int,
        rng: RngStream,
        name: str,
    ):
        if d_model % n_heads != 0:
            raise ShapeError(
                "multi_head_attention", f"{name}: d_model {d_model} not divisible by {n_heads} heads"
            )
        self.name = name
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = Linear(d_q_src, d_model, rng, f"{name}/q_proj")
        self.k_proj = Linear(d_k_src, d_model, rng, f"{name}/k_proj")
        self.v_proj = Linear(d_v_src, d_model, rng, f"{name}/v_proj")
        self.out_proj = Linear(d_model, d_model, rng, f"{name}/out_proj")

    def _check_source(self, label: str, src: Tensor, proj: Linear) -> None:
        expected = proj.weight.shape[0]
        if src.ndim != 3 or src.shape[-1] != expected:
            raise ShapeError(
                "multi_head_attention",
                f"{self.name}/{label}: expected [B, T, {expected}], got {src.shape}",
            )

    def __call__(self, q_src, k_src, v_src) -> tuple[Tensor, AttentionTrace]:
        q_src, k_src, v_src = map(ops.as_tensor, (q_src, k_src, v_src))
        self._check_source("q_proj", q_src, self.q_proj)
        self._check_source("k_proj", k_src, self.k_proj)
        self._check_source("v_proj", v_src, self.v_proj)
        if k_src.shape[-2] != v_src.shape[-2]:
            raise ShapeError(
                "multi_head_attention",
                f"{self.name}: key length {k_src.shape[-2]} != value length {v_src.shape[-2]}",
            )
        b, t_q = q_src.shape[0], q_src.shape[1]
        t_k = k_src.shape[1]

        def split_heads(x, t):
            x = ops.reshape(x, (b, t, self.n_heads, self.d_head))
            return ops.transpose_axes(x, (0, 2, 1, 3))  # [B, heads, T, d_head]

        q = split_heads(self.q_proj(q_src), t_q)
        k = split_heads(self.k_proj(k_src), t_k)
        v = split_heads(self.v_proj(v_src), t_k)
        logits = ops.mul(ops.matmul(q, ops.transpose_last2(k)), 1.0 / math.sqrt(self.d_head))
        scores = ops.softmax_last(logits)  # [B, heads, T_q, T_k]
        ctx = ops.matmul(scores, v)
        merged = ops.reshape(ops.transpose_axes(ctx, (0, 2, 1, 3)), (b, t_q, self.d_model))
        out = self.out_proj(merged)
        trace = AttentionTrace(scores=scores.values.copy(), query_len=t_q, key_len=t_k)
        return out, trace

    def named_parameters(self):
        for proj in (self.q_proj, self.k_proj, self.v_proj, self.out_proj):
            yield from proj.named_parameters()


class AlignmentAttention:
    """Attention aligning the target-series stream with context + static cues.

    Query: the stream itself.  Key: [context, broadcast static] (width
    2*d_hidden before projection).  Value: [stream, context, broadcast
    static] (width 3*d_hidden).  Works for both the encoder (length L) and
    the decoder (length H); the score matrix is T x T for input length T.
    """

    def __init__(self, d_hidden: int, n_heads: int, rng: RngStream, name: str):
        self.name = name
        self.mha = MultiHeadAttention(
            d_q_src=d_hidden,
            d_k_src=2 * d_hidden,
            d_v_src=3 * d_hidden,
            d_model=d_hidden,
            n_heads=n_heads,
            rng=rng,
            name=f"{name}/attn",
        )

    def __call__(self, stream, context_emb, static_emb) -> tuple[Tensor, AttentionTrace]:
        stream = ops.as_tensor(stream)
        context_emb = ops.as_tensor(context_emb)
        if stream.ndim != 3 or context_emb.ndim != 3 or stream.shape != context_emb.shape:
            raise ShapeError(
                "alignment_attention",
                f"{self.name}: stream {stream.shape} and context {context_emb.shape} must match",
            )
        steps = stream.shape[1]
        stat = ops.broadcast_time(static_emb, steps)
        k_src = ops.concat_last([context_emb, stat])
        v_src = ops.concat_last([stream, context_emb, stat])
        return self.mha(stream, k_src, v_src)

    def named_parameters(self):
        yield from self.mha.named_parameters()


class SelfAttentionBlock:
    """Residual self-attention with identical query/key/value plus layer norm."""

    def __init__(self, d_hidden: int, n_heads: int, dropout_p: float, rng: RngStream, name: str):
        self.name = name
        self.dropout_p = dropout_p
        self.mha = MultiHeadAttention(
            d_hidden, d_hidden, d_hidden, d_hidden, n_heads, rng, f"{name}/attn"
        )
        self.norm = LayerNorm(d_hidden, f"{name}/norm")

    def __call__(self, x, training: bool, rng) -> tuple[Tensor, AttentionTrace]:
        attn, trace = self.mha(x, x, x)
        attn = ops.dropout(attn, self.dropout_p, training, rng)
        return self.norm(x + attn), trace

    def named_parameters(self):
        yield from self.mha.named_parameters()
        yield from self.norm.named_parameters()


class HorizonTranslator:
    """Channel-token self-attention + linear time resize, lookback -> horizon."""

    def __init__(self, lookback: int, horizon: int, n_heads: int, rng: RngStream, name: str = "translate"):
        if lookback < 1 or horizon < 1:
            raise ShapeError("horizon_translator", f"invalid lengths L={lookback}, H={horizon}")
        if lookback % n_heads != 0:
            raise ShapeError(
                "horizon_translator",
                f"lookback {lookback} must be divisible by n_heads {n_heads}",
            )
        self.name = name
        self.lookback = lookback
        self.horizon = horizon
        self.mha = MultiHeadAttention(
            lookback, lookback, lookback, lookback, n_heads, rng, f"{name}/attn"
        )
        self.norm = LayerNorm(lookback, f"{name}/norm")
        self.time_map = Linear(lookback, horizon, rng, f"{name}/time_map")

    def __call__(self, encoded) -> tuple[Tensor, AttentionTrace]:
        encoded = ops.as_tensor(encoded)
        if encoded.ndim != 3 or encoded.shape[1] != self.lookback:
            raise ShapeError(
                "horizon_translator",
                f"expected [B, {self.lookback}, d_hidden], got {encoded.shape}",
            )
        tokens = ops.transpose_last2(encoded)  # [B, d_hidden, L]
        attn, trace = self.mha(tokens, tokens, tokens)  # scores [B, h, d_hidden, d_hidden]
        z = self.norm(attn)
        resized = self.time_map(z)  # [B, d_hidden, H]
        return ops.transpose_last2(resized), trace

    def named_parameters(self):
        yield from self.mha.named_parameters()
        yield from self.norm.named_parameters()
        yield from self.time_map.named_parameters()
