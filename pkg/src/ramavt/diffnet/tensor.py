"""Reverse-mode autodiff core: float32 tensors and an explicit computation tape.

Operations in :mod:`ramavt.diffnet.ops` record themselves on the innermost
active tape whenever at least one operand requires a gradient.  Running
:func:`backward` over that tape populates ``.grad`` on every participating
tensor.  Outside of a tape context all ops run as plain numpy forward math,
which is how inference and target-network passes stay cheap.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class TapeError(RuntimeError):
    """The tape was used in a way its single-pass contract forbids."""


class Tensor:
    """Dense n-dimensional array with an optional gradient buffer.

    Data is float32 by default; float64 is accepted so the finite-difference
    oracle can run at higher precision.  ``grad`` materializes lazily as zeros
    the first time it is read on a tensor that requires gradients, so leaves
    that never participated in a backward pass report zero, not None.
    """

    __slots__ = ("data", "requires_grad", "_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def grad(self) -> Optional[np.ndarray]:
        if self._grad is None and self.requires_grad:
            self._grad = np.zeros_like(self.data)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        # first contribution copies (never aliases a caller buffer), later ones add
        if self._grad is None:
            self._grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self._grad += g

    def detach(self) -> "Tensor":
        return wrap(self.data)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"


def wrap(arr) -> Tensor:
    """Wrap an ndarray without the constructor's float32 cast.

    Ops use this so their outputs keep whatever precision the operands ran at
    (float64 during finite-difference oracle runs, float32 everywhere else).
    """
    t = Tensor.__new__(Tensor)
    t.data = np.asarray(arr)
    t.requires_grad = False
    t._grad = None
    return t


class _Node:
    __slots__ = ("output", "backward_fn")

    def __init__(self, output: Tensor, backward_fn: Callable[[np.ndarray], None]):
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of primitive applications for one forward pass.

    Nodes are appended in execution order, so operands always precede their
    consumers and a single reverse sweep is a valid backward pass.  A tape is
    consumed by :func:`backward` and cannot be replayed.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def record(self, output: Tensor, backward_fn: Callable[[np.ndarray], None]) -> None:
        if self.consumed:
            raise TapeError("cannot record on a consumed tape")
        self.nodes.append(_Node(output, backward_fn))

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self, "tape stack corrupted"


_TAPE_STACK: list[Tape] = []


def active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def record(out: Tensor, inputs: Sequence[Optional[Tensor]], backward_fn) -> Tensor:
    """Attach ``out`` to the active tape if any input carries gradients."""
    tape = active_tape()
    if tape is not None and any(t is not None and t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, backward_fn)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate gradients of everything reachable from ``loss`` on ``tape``.

    The loss must be scalar.  The tape is consumed: each node is visited
    exactly once, in reverse execution order, and the node list is released
    afterwards.
    """
    if loss.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise TapeError("tape already consumed by a previous backward pass")
    loss.accumulate_grad(np.ones_like(loss.data))
    for node in reversed(tape.nodes):
        g = node.output._grad
        if g is None:
            continue
        node.backward_fn(g)
    tape.consumed = True
    tape.nodes.clear()
