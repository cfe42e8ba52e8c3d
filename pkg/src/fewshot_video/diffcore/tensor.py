"""Reverse-mode differentiable tensors on an explicit tape.

All forward math runs in 32-bit floats by default. The gradient checker
swaps parameter storage to 64-bit, so operations compute in whatever dtype
their inputs carry rather than forcing a cast.
"""

from __future__ import annotations

import itertools
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class NumericError(RuntimeError):
    """A forward computation produced NaN or Inf."""


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested operation."""


class TapeError(RuntimeError):
    """Tape misuse: nested activation, backward on a consumed tape, etc."""


class Tensor:
    """N-dimensional float array participating in reverse-mode differentiation.

    `grad` is populated by `backward` for tensors created with
    `requires_grad=True`. `node_id` identifies the tensor on the tape that
    last saw it; it is reassigned when the tensor is first used under a
    new tape.
    """

    __slots__ = ("data", "requires_grad", "grad", "node_id", "_tape_uid")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node_id: Optional[int] = None
        self._tape_uid: Optional[int] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; the implementations live in ops.py and are attached
    # at import time to avoid a circular module dependency.
    def __add__(self, other):
        return _OPS["add"](self, other)

    def __radd__(self, other):
        return _OPS["add"](other, self)

    def __sub__(self, other):
        return _OPS["sub"](self, other)

    def __rsub__(self, other):
        return _OPS["sub"](other, self)

    def __mul__(self, other):
        return _OPS["mul"](self, other)

    def __rmul__(self, other):
        return _OPS["mul"](other, self)

    def __neg__(self):
        return _OPS["mul"](self, -1.0)

    def __matmul__(self, other):
        return _OPS["matmul"](self, other)

    def reshape(self, shape):
        return _OPS["reshape"](self, shape)

    def sum(self, axis=None, keepdims=False):
        return _OPS["sum"](self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return _OPS["mean"](self, axis=axis, keepdims=keepdims)


_OPS: dict = {}


def _register_sugar(name: str, fn: Callable):
    _OPS[name] = fn


def as_tensor(value) -> Tensor:
    """Wrap scalars and arrays as constant (non-grad) tensors."""
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=DEFAULT_DTYPE))


class _Record:
    __slots__ = ("kind", "input_ids", "output_id", "backward_fn")

    def __init__(self, kind, input_ids, output_id, backward_fn):
        self.kind = kind
        self.input_ids = input_ids
        self.output_id = output_id
        self.backward_fn = backward_fn


_uid_counter = itertools.count(1)
_active_tape: Optional["Tape"] = None


class Tape:
    """Ordered record of differentiable operations for one training step.

    Exactly one tape may be active at a time; activate with a `with`
    block. Records are appended in execution order, so every record's
    inputs precede its output (acyclicity by construction).
    """

    def __init__(self):
        self.uid = next(_uid_counter)
        self.records: list[_Record] = []
        self.consumed = False
        self._next_node = itertools.count(0)
        self._leaves: dict[int, Tensor] = {}

    def __enter__(self) -> "Tape":
        global _active_tape
        if _active_tape is not None:
            raise TapeError("a tape is already active; nested tapes are not allowed")
        _active_tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _active_tape
        _active_tape = None
        return False

    def watch(self, tensor: Tensor) -> int:
        """Assign the tensor a node id on this tape (idempotent)."""
        if tensor._tape_uid != self.uid:
            tensor.node_id = next(self._next_node)
            tensor._tape_uid = self.uid
            if tensor.requires_grad:
                self._leaves[tensor.node_id] = tensor
        return tensor.node_id

    def record(self, kind: str, inputs: Sequence[Tensor], output: Tensor,
               backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        if self.consumed:
            raise TapeError("tape already backpropagated; reset before reuse")
        input_ids = tuple(self.watch(t) for t in inputs)
        output.node_id = next(self._next_node)
        output._tape_uid = self.uid
        self.records.append(_Record(kind, input_ids, output.node_id, backward_fn))

    def backward(self, loss: Tensor, params=None):
        """Populate `.grad` on every reachable requires_grad leaf.

        Leaves registered on this tape but unreachable from `loss` get a
        zero gradient, as do any extra tensors passed via `params`.
        """
        if self.consumed:
            raise TapeError("backward called twice without tape reset")
        if loss.data.size != 1:
            raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
        self.consumed = True

        # A loss that never touched the tape is constant: every grad is zero.
        on_tape = loss._tape_uid == self.uid and loss.node_id is not None
        grads: dict[int, np.ndarray] = (
            {loss.node_id: np.ones_like(loss.data)} if on_tape else {}
        )
        for rec in reversed(self.records):
            g_out = grads.pop(rec.output_id, None)
            if g_out is None:
                continue
            g_inputs = rec.backward_fn(g_out)
            for node_id, g in zip(rec.input_ids, g_inputs):
                if g is None:
                    continue
                if node_id in grads:
                    grads[node_id] = grads[node_id] + g
                else:
                    grads[node_id] = g

        for node_id, leaf in self._leaves.items():
            g = grads.get(node_id)
            if g is None:
                g = np.zeros_like(leaf.data)
            leaf.grad = g.astype(leaf.data.dtype, copy=False).reshape(leaf.data.shape)

        if params is not None:
            for p in params:
                if p.requires_grad and (p._tape_uid != self.uid or p.grad is None):
                    p.grad = np.zeros_like(p.data)


def active_tape() -> Optional[Tape]:
    return _active_tape


def backward(loss: Tensor, params=None):
    """Backpropagate `loss` through the currently active tape."""
    tape = _active_tape
    if tape is None:
        raise TapeError("no active tape; wrap the forward pass in `with Tape():`")
    tape.backward(loss, params=params)


def check_finite(arr: np.ndarray, kind: str):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by '{kind}'")


def make_result(data: np.ndarray, kind: str, inputs: Sequence[Tensor],
                backward_fn: Callable) -> Tensor:
    """Finalize an op: finiteness check, tape registration, grad flags."""
    check_finite(data, kind)
    out = Tensor(data, dtype=data.dtype)
    tape = _active_tape
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(kind, inputs, out, backward_fn)
    return out
