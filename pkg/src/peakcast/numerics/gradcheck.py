"""Central-finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


class GradCheckError(RuntimeError):
    pass


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    n_coordinates: int

    def __float__(self) -> float:
        return self.max_rel_error


def finite_difference_check(
    f,
    params: dict[str, Tensor],
    eps: float = 1e-5,
) -> GradCheckReport:
    """Compare backward() gradients of ``f(params)`` against central differences.

    ``f`` must be deterministic (no train-mode dropout) and return a scalar
    tensor.  Per coordinate the relative error is
    |analytic - numeric| / max(1, |numeric|); the maximum over all
    coordinates of all parameters is reported.
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")

    loss = f(params)
    if loss.size != 1:
        raise GradCheckError(f"f must return a scalar, got shape {loss.shape}")
    if not np.isfinite(loss.values).all():
        raise GradCheckError("f returned a non-finite value")
    for p in params.values():
        p.grad = None
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros(p.shape))
        for name, p in params.items()
    }

    worst = 0.0
    worst_param = ""
    n_coords = 0
    for name, p in params.items():
        flat = p.values.ravel()
        if flat.base is None and p.values.ndim > 0:
            # ravel copied (non-contiguous storage); keep a writable alias
            raise GradCheckError(f"parameter '{name}' is not contiguous")
        aflat = analytic[name].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(f(params).values)
            flat[i] = orig - eps
            f_minus = float(f(params).values)
            flat[i] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise GradCheckError(f"f returned a non-finite value near parameter '{name}'")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            rel = float(abs(aflat[i] - numeric) / max(1.0, abs(numeric)))
            n_coords += 1
            if rel > worst:
                worst = rel
                worst_param = name
    return GradCheckReport(max_rel_error=worst, worst_param=worst_param, n_coordinates=n_coords)
