"""Parameterized building blocks shared by the embedding and attention modules.

Initialization draws from a named stream per parameter, so a parameter's
initial values depend only on (seed, parameter name) and stay identical
when unrelated sub-modules are enabled or disabled.
"""

from __future__ import annotations

import math

import numpy as np

from .numerics import RngStream, Tensor, ops

EMBED_INIT_SD = 0.02


def uniform_fan_in(rng: RngStream, name: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.child(name).uniform(-bound, bound, shape), requires_grad=True)


def small_normal(rng: RngStream, name: str, shape: tuple[int, ...]) -> Tensor:
    return Tensor(rng.child(name).normal(shape, EMBED_INIT_SD), requires_grad=True)


def zeros(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


class Linear:
    def __init__(self, d_in: int, d_out: int, rng: RngStream, name: str, zero_init: bool = False):
        self.name = name
        if zero_init:
            self.weight = zeros((d_in, d_out))
        else:
            self.weight = uniform_fan_in(rng, f"{name}/W", (d_in, d_out), d_in)
        self.bias = zeros((d_out,))

    def __call__(self, x) -> Tensor:
        return ops.linear(x, self.weight, self.bias)

    def named_parameters(self):
        yield f"{self.name}/W", self.weight
        yield f"{self.name}/b", self.bias


class LayerNorm:
    def __init__(self, d: int, name: str, eps: float = 1e-5):
        self.name = name
        self.eps = eps
        self.gain = ones((d,))
        self.bias = zeros((d,))

    def __call__(self, x) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias, self.eps)

    def named_parameters(self):
        yield f"{self.name}/gain", self.gain
        yield f"{self.name}/bias", self.bias
