"""Protein and ligand graph construction."""

from .features import (
    ELEMENTS,
    N_FEATURES,
    SCHEMA,
    SCHEMA_VERSION,
    FeatureSchema,
    featurize,
    unknown_elements,
)
from .graph import Atom, MolecularGraph, build_graph, contact_nodes, crop_pocket, radius_edges

__all__ = [
    "Atom",
    "ELEMENTS",
    "FeatureSchema",
    "MolecularGraph",
    "N_FEATURES",
    "SCHEMA",
    "SCHEMA_VERSION",
    "build_graph",
    "contact_nodes",
    "crop_pocket",
    "featurize",
    "radius_edges",
    "unknown_elements",
]
