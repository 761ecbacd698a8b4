"""Differentiable operations on :class:`Tensor`.

Every op computes its forward value with numpy and, when any input is
attached to a tape, records a closure mapping the output gradient to
input gradients.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ContractError, DimensionError, SegmentIndexError
from .tensor import Tensor, as_tensor


def _tape_of(*tensors):
    for t in tensors:
        if t.tape is not None:
            return t.tape
    return None


def _emit(op, inputs, value, backward):
    tape = _tape_of(*inputs)
    out = Tensor(value, tape=tape)
    if tape is not None:
        tape.record(op, inputs, out, backward)
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _emit("add", (a, b), a.data + b.data,
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _emit("sub", (a, b), a.data - b.data,
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _emit("mul", (a, b), ad * bd,
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _emit("square", (a,), ad * ad, lambda g: (2.0 * ad * g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} do not align")
    ad, bd = a.data, b.data
    return _emit("matmul", (a, b), ad @ bd, lambda g: (g @ bd.T, ad.T @ g))


# activations

def silu(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return _emit("silu", (a,), x * sig, lambda g: (g * sig * (1.0 + x * (1.0 - sig)),))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    x = a.data
    factor = np.where(x > 0, 1.0, slope)
    return _emit("leaky_relu", (a,), x * factor, lambda g: (g * factor,))


def identity(a) -> Tensor:
    return as_tensor(a)


ACTIVATIONS = {"silu": silu, "leaky_relu": leaky_relu, "identity": identity}


# shape manipulation

def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    datas = [t.data for t in ts]
    axis = axis % datas[0].ndim
    bounds = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", tuple(ts), np.concatenate(datas, axis=axis), back)


def gather_rows(a, index) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.int64)
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _emit("gather_rows", (a,), a.data[idx], back)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _emit("reshape", (a,), a.data.reshape(shape), lambda g: (g.reshape(old),))


# reductions

def sum_all(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _emit("sum_all", (a,), np.asarray(a.data.sum()),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(a) -> Tensor:
    a = as_tensor(a)
    shape, n = a.shape, a.data.size
    return _emit("mean_all", (a,), np.asarray(a.data.mean()),
                 lambda g: (np.full(shape, float(g) / n),))


def sum_rows(a) -> Tensor:
    """Sum over axis 0, keeping a leading axis of length one."""
    a = as_tensor(a)
    shape = a.shape
    return _emit("sum_rows", (a,), a.data.sum(axis=0, keepdims=True),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


def sum_last(a) -> Tensor:
    """Sum over the last axis with keepdims."""
    a = as_tensor(a)
    shape = a.shape
    return _emit("sum_last", (a,), a.data.sum(axis=-1, keepdims=True),
                 lambda g: (np.broadcast_to(g, shape).copy(),))


# segment operations

def _check_segments(segment_ids, n_segments, n_rows):
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape != (n_rows,):
        raise DimensionError(f"expected {n_rows} segment ids, got shape {seg.shape}")
    if seg.size and (seg.min() < 0 or seg.max() >= n_segments):
        bad = seg[(seg < 0) | (seg >= n_segments)][0]
        raise SegmentIndexError(f"segment id {bad} outside [0, {n_segments})")
    return seg


def segment_reduce(values, segment_ids, n_segments: int, mode: str = "sum") -> Tensor:
    """Reduce rows of ``values`` grouped by ``segment_ids``.

    Empty segments produce zero rows for every mode.
    """
    v = as_tensor(values)
    x = v.data
    seg = _check_segments(segment_ids, n_segments, x.shape[0])
    tail = x.shape[1:]
    counts = np.bincount(seg, minlength=n_segments).astype(np.float64)
    total = np.zeros((n_segments,) + tail)
    np.add.at(total, seg, x)

    if mode == "sum":
        return _emit("segment_sum", (v,), total, lambda g: (g[seg],))

    if mode == "mean":
        denom = np.maximum(counts, 1.0).reshape((-1,) + (1,) * len(tail))
        return _emit("segment_mean", (v,), total / denom, lambda g: ((g / denom)[seg],))

    if mode == "max":
        out = np.full((n_segments,) + tail, -np.inf)
        np.maximum.at(out, seg, x)
        out[counts == 0] = 0.0
        # gradient routed to the first row attaining the max in each segment
        hit = x == out[seg]
        width = int(np.prod(tail, dtype=np.int64))
        flat_hit = hit.reshape(len(seg), width)
        winner = np.full((n_segments, width), -1, dtype=np.int64)
        for row in range(len(seg) - 1, -1, -1):
            cols = flat_hit[row]
            winner[seg[row], cols] = row
        winner = winner.reshape((n_segments,) + tail)

        def back(g):
            gx = np.zeros_like(x)
            mask = winner >= 0
            seg_idx, *rest = np.nonzero(mask)
            rows = winner[mask]
            gx[(rows, *rest)] = g[mask]
            return (gx,)

        return _emit("segment_max", (v,), out, back)

    raise ContractError(f"unknown reduction mode {mode!r}")


def segment_softmax(logits, segment_ids, n_segments: int) -> Tensor:
    """Softmax of ``logits`` within each segment, max-shifted for stability."""
    v = as_tensor(logits)
    x = v.data
    seg = _check_segments(segment_ids, n_segments, x.shape[0])
    seg_max = np.full((n_segments,) + x.shape[1:], -np.inf)
    np.maximum.at(seg_max, seg, x)
    e = np.exp(x - seg_max[seg])
    denom = np.zeros_like(seg_max)
    np.add.at(denom, seg, e)
    y = e / denom[seg]

    def back(g):
        dot = np.zeros_like(seg_max)
        np.add.at(dot, seg, g * y)
        return (y * (g - dot[seg]),)

    return _emit("segment_softmax", (v,), y, back)
