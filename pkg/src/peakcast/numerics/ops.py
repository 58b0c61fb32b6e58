"""Differentiable operations on :class:`~peakcast.numerics.tensor.Tensor`.

Each op computes its forward value in float64 and registers a closure
producing vector-Jacobian products for its parents.  Shape violations
raise :class:`ShapeError` naming the op and both shapes.
"""

from __future__ import annotations

import math

import numpy as np

from .rng import RngStream
from .tensor import ShapeError, Tensor, as_tensor, make_node, unbroadcast


# -- elementwise arithmetic ----------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        values = a.values + b.values
    except ValueError:
        raise ShapeError("add", f"shapes {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        return [(a, unbroadcast(g, a.shape)), (b, unbroadcast(g, b.shape))]

    return make_node("add", values, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        values = a.values - b.values
    except ValueError:
        raise ShapeError("sub", f"shapes {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        return [(a, unbroadcast(g, a.shape)), (b, unbroadcast(-g, b.shape))]

    return make_node("sub", values, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        values = a.values * b.values
    except ValueError:
        raise ShapeError("mul", f"shapes {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        return [
            (a, unbroadcast(g * b.values, a.shape)),
            (b, unbroadcast(g * a.values, b.shape)),
        ]

    return make_node("mul", values, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_node("neg", -a.values, (a,), lambda g: [(a, -g)])


def relu(a) -> Tensor:
    """Elementwise max(x, 0); the subgradient at 0 is 0."""
    a = as_tensor(a)
    values = np.maximum(a.values, 0.0)

    def backward(g):
        return [(a, g * (a.values > 0.0))]

    return make_node("relu", values, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    values = np.tanh(a.values)

    def backward(g):
        return [(a, g * (1.0 - values * values))]

    return make_node("tanh", values, (a,), backward)


# -- structural ops ------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", f"operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", f"inner dimensions differ: {a.shape} @ {b.shape}")
    try:
        values = a.values @ b.values
    except ValueError:
        raise ShapeError("matmul", f"batch dimensions do not broadcast: {a.shape} @ {b.shape}") from None

    def backward(g):
        ga = g @ np.swapaxes(b.values, -1, -2)
        gb = np.swapaxes(a.values, -1, -2) @ g
        return [(a, unbroadcast(ga, a.shape)), (b, unbroadcast(gb, b.shape))]

    return make_node("matmul", values, (a, b), backward)


def transpose_last2(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim < 2:
        raise ShapeError("transpose_last2", f"needs at least 2 axes, got shape {a.shape}")
    values = np.swapaxes(a.values, -1, -2)

    def backward(g):
        return [(a, np.swapaxes(g, -1, -2))]

    return make_node("transpose_last2", values, (a,), backward)


def transpose_axes(a, axes: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError("transpose_axes", f"{axes} is not a permutation of axes of {a.shape}")
    values = np.transpose(a.values, axes)
    inverse = np.argsort(axes)

    def backward(g):
        return [(a, np.transpose(g, inverse))]

    return make_node("transpose_axes", values, (a,), backward)


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        values = a.values.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", f"cannot reshape {a.shape} to {shape}") from None

    def backward(g):
        return [(a, g.reshape(a.shape))]

    return make_node("reshape", values, (a,), backward)


def concat_last(parts) -> Tensor:
    """Concatenate along the last axis."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat_last", "needs at least one operand")
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise ShapeError(
                "concat_last",
                f"leading dimensions differ: {[p.shape for p in parts]}",
            )
    values = np.concatenate([p.values for p in parts], axis=-1)
    widths = [p.shape[-1] for p in parts]

    def backward(g):
        out, off = [], 0
        for p, w in zip(parts, widths):
            out.append((p, g[..., off : off + w]))
            off += w
        return out

    return make_node("concat_last", values, tuple(parts), backward)


def broadcast_time(a, steps: int) -> Tensor:
    """Repeat x along a new second-to-last (time) axis: [..., d] -> [..., steps, d]."""
    a = as_tensor(a)
    if steps <= 0:
        raise ShapeError("broadcast_time", f"steps must be positive, got {steps}")
    expanded = np.expand_dims(a.values, axis=-2)
    shape = expanded.shape[:-2] + (steps,) + expanded.shape[-1:]
    values = np.broadcast_to(expanded, shape).copy()

    def backward(g):
        return [(a, g.sum(axis=-2))]

    return make_node("broadcast_time", values, (a,), backward)


def slice_last(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    d = a.shape[-1]
    if not (0 <= start < stop <= d):
        raise ShapeError("slice_last", f"slice [{start}:{stop}] invalid for width {d}")
    values = a.values[..., start:stop]

    def backward(g):
        full = np.zeros(a.shape)
        full[..., start:stop] = g
        return [(a, full)]

    return make_node("slice_last", values.copy(), (a,), backward)


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    values = np.asarray(a.values.sum())

    def backward(g):
        return [(a, np.full(a.shape, float(g)))]

    return make_node("sum_all", values, (a,), backward)


# -- neural-net building blocks ------------------------------------------------


def linear(x, weight, bias) -> Tensor:
    """x @ weight + bias over the last axis; weight is [d_in, d_out]."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if weight.ndim != 2:
        raise ShapeError("linear", f"weight must be 2-D, got {weight.shape}")
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError("linear", f"input width {x.shape} does not match weight {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError("linear", f"bias shape {bias.shape} does not match weight {weight.shape}")
    values = x.values @ weight.values + bias.values
    d_in, d_out = weight.shape

    def backward(g):
        gx = g @ weight.values.T
        g2 = g.reshape(-1, d_out)
        x2 = x.values.reshape(-1, d_in)
        return [(x, gx), (weight, x2.T @ g2), (bias, g2.sum(axis=0))]

    return make_node("linear", values, (x, weight, bias), backward)


def softmax_last(x) -> Tensor:
    """Numerically stable softmax over the last axis."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ShapeError("softmax_last", f"cannot normalize over empty axis, shape {x.shape}")
    shifted = x.values - x.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    values = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * values).sum(axis=-1, keepdims=True)
        return [(x, values * (g - inner))]

    return make_node("softmax_last", values, (x,), backward)


def dropout(x, p: float, training: bool, rng: RngStream | None) -> Tensor:
    """Inverted dropout: train-time activations are scaled by 1/(1-p).

    With ``training=False`` or ``p == 0`` this is the identity (the input
    tensor is returned unchanged).
    """
    x = as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout with training=True needs an explicit rng stream")
    keep = (rng.uniform(shape=x.shape) >= p) / (1.0 - p)
    values = x.values * keep

    def backward(g):
        return [(x, g * keep)]

    return make_node("dropout", values, (x,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize each last-axis slice to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise ShapeError("layer_norm", f"empty normalization axis, shape {x.shape}")
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            "layer_norm", f"gain {gain.shape} / bias {bias.shape} do not match width {d}"
        )
    if eps <= 0.0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    mu = x.values.mean(axis=-1, keepdims=True)
    centered = x.values - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    values = xhat * gain.values + bias.values

    def backward(g):
        g2 = g.reshape(-1, d)
        ggain = (g * xhat).reshape(-1, d).sum(axis=0)
        gbias = g2.sum(axis=0)
        gxhat = g * gain.values
        m1 = gxhat.mean(axis=-1, keepdims=True)
        m2 = (gxhat * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (gxhat - m1 - xhat * m2)
        return [(x, gx), (gain, ggain), (bias, gbias)]

    return make_node("layer_norm", values, (x, gain, bias), backward)


def dilated_conv1d(x, kernels, dilation: int) -> Tensor:
    """Causal dilated 1-D convolution preserving sequence length.

    ``x`` is [..., T, c_in], ``kernels`` is [k, c_in, c_out]; position t sees
    x[t - j*dilation] for tap j, with out-of-range positions treated as zero
    (left zero padding).
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    if kernels.ndim != 3:
        raise ShapeError("dilated_conv1d", f"kernels must be [k, c_in, c_out], got {kernels.shape}")
    k, c_in, c_out = kernels.shape
    if k <= 0:
        raise ValueError(f"kernel size must be positive, got {k}")
    if dilation <= 0:
        raise ValueError(f"dilation must be positive, got {dilation}")
    if x.ndim < 2 or x.shape[-1] != c_in:
        raise ShapeError(
            "dilated_conv1d", f"input {x.shape} does not match kernel channels {kernels.shape}"
        )
    t_len = x.shape[-2]
    values = np.zeros(x.shape[:-1] + (c_out,))
    for j in range(k):
        shift = j * dilation
        if shift >= t_len:
            break
        values[..., shift:, :] += x.values[..., : t_len - shift, :] @ kernels.values[j]

    def backward(g):
        gx = np.zeros(x.shape)
        gk = np.zeros(kernels.shape)
        for j in range(k):
            shift = j * dilation
            if shift >= t_len:
                break
            gx[..., : t_len - shift, :] += g[..., shift:, :] @ kernels.values[j].T
            x2 = x.values[..., : t_len - shift, :].reshape(-1, c_in)
            g2 = g[..., shift:, :].reshape(-1, c_out)
            gk[j] = x2.T @ g2
        return [(x, gx), (kernels, gk)]

    return make_node("dilated_conv1d", values, (x, kernels), backward)


def embedding_lookup(table, indices) -> Tensor:
    """Select rows of an embedding table by integer index."""
    table = as_tensor(table)
    idx = np.asarray(indices)
    if table.ndim != 2:
        raise ShapeError("embedding_lookup", f"table must be 2-D, got {table.shape}")
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValueError("embedding indices must be integers")
    card = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= card):
        bad = int(idx.min()) if idx.min() < 0 else int(idx.max())
        raise ValueError(f"embedding index {bad} out of vocabulary (size {card})")
    values = table.values[idx]

    def backward(g):
        gt = np.zeros(table.shape)
        np.add.at(gt, idx, g)
        return [(table, gt)]

    return make_node("embedding_lookup", values, (table,), backward)


def scaled_dot_scores(q, k) -> Tensor:
    """softmax(q kᵀ / sqrt(d_head)) over the key axis."""
    q, k = as_tensor(q), as_tensor(k)
    d_head = q.shape[-1]
    logits = mul(matmul(q, transpose_last2(k)), 1.0 / math.sqrt(d_head))
    return softmax_last(logits)
