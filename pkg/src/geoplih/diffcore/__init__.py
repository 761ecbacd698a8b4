"""Minimal float64 reverse-mode differentiation, optimiser, and checkpoints."""

from . import ops
from .mlp import mlp_forward
from .ops import segment_reduce, segment_softmax
from .params import (
    FORMAT_VERSION,
    ParamStore,
    adam_step,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import Tape, Tensor, as_tensor, backward, bind

__all__ = [
    "FORMAT_VERSION",
    "ParamStore",
    "Tape",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "bind",
    "load_checkpoint",
    "mlp_forward",
    "ops",
    "save_checkpoint",
    "segment_reduce",
    "segment_softmax",
]
