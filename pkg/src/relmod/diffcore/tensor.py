"""Dense float64 tensors with reverse-mode differentiation.

Every primitive creates a :class:`Node` stamped with a global execution
sequence number. ``backward`` collects the nodes reachable from the loss
and replays them in strictly decreasing sequence order, which is exactly
the reverse of execution order.
"""
from __future__ import annotations

import itertools
import weakref
from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BackwardError

_seq = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Node:
    """One executed primitive: its inputs and a vector-Jacobian product."""

    __slots__ = ("seq", "op", "inputs", "vjp", "out", "consumed")

    def __init__(self, op: str, inputs: Sequence["Tensor"], vjp: Callable, out: "Tensor"):
        self.seq = next(_seq)
        self.op = op
        self.inputs = tuple(inputs)
        self.vjp = vjp
        self.out = weakref.ref(out)
        self.consumed = False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_node", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._node: Optional[Node] = None

    # --- basic introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # --- operator sugar; implementations live in ops ---------------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(as_tensor(other), self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(as_tensor(other), self)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def relu(self):
        from . import ops
        return ops.relu(self)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(op: str, data: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Wrap a forward result and, if needed, attach its backward rule.

    ``vjp(grad_out)`` must return one gradient (or None) per input, each
    already reduced to that input's shape.
    """
    out = Tensor(data)
    if _grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._node = Node(op, inputs, vjp, out)
    return out


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every requires-grad tensor reachable from ``loss``.

    Leaf gradients accumulate across calls (call ``zero_grad`` between
    steps). The graph is consumed: a second call on the same graph raises.
    """
    if loss.data.size != 1:
        raise BackwardError(f"backward needs a scalar root, got shape {loss.shape}")
    if not loss.requires_grad:
        raise BackwardError("loss does not depend on any tensor requiring grad")
    root = loss._node
    if root is None:
        loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
        return

    nodes: dict[int, Node] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if node.seq in nodes:
            continue
        if node.consumed:
            raise BackwardError(
                f"graph through op '{node.op}' was already consumed by an earlier "
                "backward; rebuild the forward pass first")
        nodes[node.seq] = node
        for t in node.inputs:
            if t._node is not None and t._node.seq not in nodes:
                stack.append(t._node)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for seq in sorted(nodes, reverse=True):
        node = nodes[seq]
        out = node.out()
        g = grads.pop(id(out), None) if out is not None else None
        node.consumed = True
        if g is None:
            continue
        if out is not None:
            out.grad = g
        in_grads = node.vjp(g)
        for t, gi in zip(node.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if t._node is None:
                leaves[key] = t
        node.vjp = None
    for key, t in leaves.items():
        g = grads[key]
        t.grad = g.copy() if t.grad is None else t.grad + g
