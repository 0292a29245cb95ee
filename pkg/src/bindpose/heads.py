"""Readout heads: pooled affinity and binding probability, masked-attribute classifiers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from bindpose import diffcore as dc
from bindpose.graph import BOND_CLASSES, LIGAND_ELEMENTS, SCALE
from bindpose.residues import AMINO_ACIDS, ATOM_NAMES


def pool(feats: torch.Tensor, edges: torch.Tensor, norm: nn.LayerNorm | None = None) -> torch.Tensor:
    """Layer-normed concat of the node mean and the edge mean."""
    r = dc.concat([feats.mean(dim=0), edges.reshape(-1, edges.shape[-1]).mean(dim=0)])
    return norm(r) if norm is not None else dc.layer_norm(r)


class MLP2(nn.Module):
    def __init__(self, d_in: int, d_out: int, slope: float, d_hidden: int | None = None):
        super().__init__()
        self.fc1 = nn.Linear(d_in, d_hidden or d_in)
        self.fc2 = nn.Linear(d_hidden or d_in, d_out)
        self.slope = slope

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(dc.leaky_relu(self.fc1(x), self.slope))


class Heads(nn.Module):
    def __init__(self, d_f: int, d_e: int, slope: float):
        super().__init__()
        self.norm = nn.LayerNorm(d_f + d_e)
        self.affinity = MLP2(d_f + d_e, 1, slope)
        self.binding = MLP2(d_f + d_e, 1, slope)

    def pool(self, feats: torch.Tensor, edges: torch.Tensor) -> torch.Tensor:
        return pool(feats, edges, self.norm)

    def affinity_head(self, r: torch.Tensor) -> torch.Tensor:
        """Non-negative affinity in scaled units."""
        return dc.relu(self.affinity(r)).squeeze(-1)

    def screening_head(self, r: torch.Tensor) -> torch.Tensor:
        return dc.sigmoid(self.binding(r)).squeeze(-1)

    def forward(self, feats, edges):
        r = self.pool(feats, edges)
        return self.affinity_head(r), self.screening_head(r)


class MaskHeads(nn.Module):
    """Classifiers for masked protein atom names, residues, ligand elements and bonds."""

    def __init__(self, d_f: int, d_e: int, slope: float):
        super().__init__()
        self.atom_name = MLP2(d_f, len(ATOM_NAMES), slope)
        self.residue = MLP2(d_f, len(AMINO_ACIDS), slope)
        self.element = MLP2(d_f, len(LIGAND_ELEMENTS), slope)
        self.bond = MLP2(d_e, len(BOND_CLASSES), slope)


def screening_score(y_bind, y_aff):
    """Binding probability times (unscaled) affinity."""
    return y_bind * y_aff


@dataclass
class PredictionRecord:
    """One complex's prediction; coordinates in Angstrom, affinity in -log units."""

    coords: np.ndarray
    trace: np.ndarray  # [n_updates, n_ligand, 3]
    affinity: float
    probability: float
    members: list[np.ndarray] = field(default_factory=list)
    medoid: int = 0
    rmsd_trace: list[float] | None = None

    @property
    def screening_score(self) -> float:
        return float(screening_score(self.probability, self.affinity))

    def to_json(self) -> dict:
        return {
            "affinity": self.affinity,
            "probability": self.probability,
            "screening_score": self.screening_score,
            "medoid": self.medoid,
            "n_members": len(self.members),
            "rmsd_trace": self.rmsd_trace,
        }


def unscale_affinity(y: float) -> float:
    return float(y) / SCALE
