"""Equivariant protein-ligand interaction model pre-trained on trajectory frames."""

__version__ = "0.1.0"
