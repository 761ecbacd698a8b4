"""Dense float64 tensors with a reverse-mode recording tape."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError

_ids = itertools.count()


class Tensor:
    """A float64 array, optionally attached to a :class:`Tape`.

    Tensors without a tape are plain values; operations on them record
    nothing, which is the fast path for evaluation.
    """

    __slots__ = ("data", "tape", "id", "name")

    def __init__(self, data, tape: "Tape | None" = None, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.id = next(_ids)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # arithmetic sugar, dispatching to ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


@dataclass
class Record:
    op: str
    inputs: tuple[int, ...]
    output: int
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered log of differentiable operations.

    ``backward`` walks the log in exact reverse order of recording and
    returns gradients keyed by parameter name.
    """

    records: list[Record] = field(default_factory=list)
    leaves: dict[str, Tensor] = field(default_factory=dict)
    gradients: dict[str, np.ndarray] | None = None

    def watch(self, name: str, value) -> Tensor:
        if name in self.leaves:
            raise ContractError(f"parameter {name!r} already watched on this tape")
        t = Tensor(value, tape=self, name=name)
        self.leaves[name] = t
        return t

    def params(self, store) -> dict[str, Tensor]:
        """Watch every entry of a ParamStore (or plain mapping)."""
        entries = getattr(store, "entries", store)
        return {name: self.watch(name, arr) for name, arr in entries.items()}

    def constant(self, value) -> Tensor:
        return Tensor(value, tape=None)

    def record(self, op, inputs, output: Tensor, backward) -> None:
        self.records.append(
            Record(op, tuple(t.id for t in inputs), output.id, backward)
        )

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        if loss.data.size != 1:
            raise ContractError(f"loss must be a scalar, got shape {loss.shape}")
        if loss.tape is not self and loss.tape is not None:
            raise ContractError("loss was not produced on this tape")
        grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
        for rec in reversed(self.records):
            g = grads.pop(rec.output, None)
            if g is None:
                continue
            for tid, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None:
                    continue
                if tid in grads:
                    grads[tid] = grads[tid] + gi
                else:
                    grads[tid] = gi
        out = {}
        for name, leaf in self.leaves.items():
            g = grads.get(leaf.id)
            out[name] = np.zeros_like(leaf.data) if g is None else np.array(g).reshape(leaf.shape)
        self.gradients = out
        return out


def backward(tape: Tape, loss: Tensor) -> dict[str, np.ndarray]:
    return tape.backward(loss)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def bind(store, tape: Tape | None = None) -> dict[str, Tensor]:
    """Expose a ParamStore's entries as tensors, watched when a tape is given."""
    if tape is not None:
        return tape.params(store)
    entries = getattr(store, "entries", store)
    return {name: Tensor(arr, name=name) for name, arr in entries.items()}
