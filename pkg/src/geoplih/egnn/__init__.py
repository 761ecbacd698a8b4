"""Equivariant cross-graph model."""

from .model import (
    COORD_FORMS,
    KINDS,
    ComplexState,
    LayerConfig,
    add_head,
    aggregate,
    compute_messages,
    cross_attention,
    cross_pairs,
    embed_inputs,
    forward_complex,
    init_params,
    is_head_param,
    predict_affinity,
    update_coordinates,
    update_node_features,
)

__all__ = [
    "COORD_FORMS",
    "KINDS",
    "ComplexState",
    "LayerConfig",
    "add_head",
    "aggregate",
    "compute_messages",
    "cross_attention",
    "cross_pairs",
    "embed_inputs",
    "forward_complex",
    "init_params",
    "is_head_param",
    "predict_affinity",
    "update_coordinates",
    "update_node_features",
]
