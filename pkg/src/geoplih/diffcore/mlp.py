from __future__ import annotations

from typing import Mapping, Sequence

from ..errors import ContractError, DimensionError
from . import ops
from .tensor import Tensor, as_tensor


def mlp_forward(
    params: Mapping[str, Tensor],
    prefix: str,
    x,
    sizes: Sequence[int],
    activation: str = "silu",
    final_activation: bool = False,
) -> Tensor:
    """Apply a stack of affine layers ``prefix.{k}.weight/bias``.

    The activation follows every layer except the last, unless
    ``final_activation`` is set.
    """
    try:
        act = ops.ACTIVATIONS[activation]
    except KeyError:
        raise ContractError(f"unsupported activation {activation!r}") from None
    h = as_tensor(x)
    n = len(sizes) - 1
    for k in range(n):
        w = params[f"{prefix}.{k}.weight"]
        b = params[f"{prefix}.{k}.bias"]
        if h.shape[-1] != w.shape[0]:
            raise DimensionError(
                f"layer {prefix}.{k} expects input width {w.shape[0]}, got {h.shape[-1]}"
            )
        if w.shape[1] != sizes[k + 1]:
            raise DimensionError(
                f"layer {prefix}.{k} has width {w.shape[1]}, configured {sizes[k + 1]}"
            )
        h = ops.add(ops.matmul(h, w), b)
        if k < n - 1 or final_activation:
            h = act(h)
    return h
