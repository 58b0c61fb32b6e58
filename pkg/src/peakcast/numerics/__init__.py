"""Minimal differentiable array engine: ops, optimizer, gradient checking."""

from .gradcheck import GradCheckError, GradCheckReport, finite_difference_check
from .optim import (
    OptimizerError,
    OptimizerState,
    adamw_step,
    clip_grad_norm,
    collect_grads,
    init_optimizer,
    zero_grads,
)
from .rng import RngStream, derive_seed
from .tensor import DEBUG_NAN_ENV, GraphError, ShapeError, Tensor, as_tensor

from . import ops

__all__ = [
    "DEBUG_NAN_ENV",
    "GradCheckError",
    "GradCheckReport",
    "GraphError",
    "OptimizerError",
    "OptimizerState",
    "RngStream",
    "ShapeError",
    "Tensor",
    "adamw_step",
    "as_tensor",
    "clip_grad_norm",
    "collect_grads",
    "derive_seed",
    "finite_difference_check",
    "init_optimizer",
    "ops",
    "zero_grads",
]
