"""Protein-ligand pose, affinity and screening prediction with an equivariant graph network."""

__version__ = "0.1.0"
