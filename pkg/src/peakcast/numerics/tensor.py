"""Dense float64 arrays with reverse-mode differentiation.

A :class:`Tensor` wraps a numpy array plus, when it participates in a
differentiable computation, the closure needed to propagate gradients to
its parents.  Graphs are built eagerly by the op functions in
:mod:`peakcast.numerics.ops`; calling :meth:`Tensor.backward` on a scalar
walks the recorded graph once and accumulates gradients into the leaf
tensors' ``grad`` buffers.

Setting the environment variable ``PEAKCAST_DEBUG_NAN`` to a non-empty,
non-zero value makes every op assert that its forward result is finite.
"""

from __future__ import annotations

import os

import numpy as np

DEBUG_NAN_ENV = "PEAKCAST_DEBUG_NAN"


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""

    def __init__(self, op: str, detail: str):
        super().__init__(f"{op}: {detail}")
        self.op = op


class GraphError(RuntimeError):
    """Backward called on a non-scalar value or an already-consumed graph."""


def _debug_nan() -> bool:
    return os.environ.get(DEBUG_NAN_ENV, "") not in ("", "0")


class Tensor:
    """A dense float64 array, optionally tracking gradients.

    ``grad`` is ``None`` until a backward pass deposits a gradient; a
    missing gradient means zero.  Leaf tensors (no parents) keep their
    ``grad`` buffers across backward passes and accumulate into them.
    """

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward_fn", "_consumed")

    # make `ndarray <op> Tensor` dispatch to the reflected Tensor op
    __array_ufunc__ = None

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None
        self._consumed = False

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return self.values.item()

    def __repr__(self) -> str:
        tag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{tag})"

    # -- operators (implemented in ops.py, bound late to avoid a cycle) -------

    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    # -- autodiff -------------------------------------------------------------

    def backward(self) -> None:
        """Populate ``grad`` on every reachable leaf with d(self)/d(leaf).

        ``self`` must hold a single value.  The traversed graph is consumed:
        a second backward through any of its interior nodes raises
        :class:`GraphError` (leaves stay reusable, so a fresh forward pass
        from the same parameters is fine).
        """
        if self.size != 1:
            raise GraphError(f"backward requires a scalar, got shape {self.shape}")
        if not self.requires_grad:
            return  # nothing reachable; all gradients are zero
        topo = self._toposort()
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.values)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward_fn is not None:
                for parent, pg in node._backward_fn(g):
                    if not parent.requires_grad:
                        continue
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
            else:
                node.grad = g.copy() if node.grad is None else node.grad + g
        for node in topo:
            if node._backward_fn is not None:
                node._consumed = True
                node._parents = ()
                node._backward_fn = None

    def _toposort(self) -> list["Tensor"]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            if node._consumed:
                raise GraphError(
                    "graph already consumed by a previous backward; run a fresh forward"
                )
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        return order


def as_tensor(x) -> Tensor:
    """Wrap plain numbers/arrays as constant tensors; pass tensors through."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def make_node(op: str, values: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Build an op result, recording graph structure only when needed."""
    if _debug_nan() and not np.all(np.isfinite(values)):
        raise FloatingPointError(f"{op} produced non-finite values")
    out = Tensor(values)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcasting introduced."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    squeezed = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if squeezed:
        grad = grad.sum(axis=squeezed, keepdims=True)
    return grad
