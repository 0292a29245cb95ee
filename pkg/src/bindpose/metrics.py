"""Pose and screening evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from bindpose.symmetry import EquivalentIndexSet


def rmsd(pred, native, eqset: EquivalentIndexSet | None = None) -> float:
    """Minimum RMSD over equivalent indexes, without superposition."""
    pred = np.asarray(pred, dtype=np.float64)
    native = np.asarray(native, dtype=np.float64)
    if pred.shape != native.shape:
        raise ValueError(f"pose shapes differ: {pred.shape} vs {native.shape}")
    perms = eqset.perms if eqset is not None else np.arange(len(pred))[None]
    sq = ((pred[None] - native[perms]) ** 2).sum(-1).mean(-1)
    return float(np.sqrt(sq.min()))


def pairwise_rmsd(poses: Sequence[np.ndarray], eqset: EquivalentIndexSet | None = None) -> np.ndarray:
    n = len(poses)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = rmsd(poses[i], poses[j], eqset)
    return out


def medoid_index(distances: np.ndarray) -> int:
    """Member with the smallest summed distance to the others (first on ties)."""
    return int(np.argmin(np.asarray(distances).sum(axis=1)))


def success_rate(rmsds: Iterable[float], threshold: float = 2.0) -> float:
    values = list(rmsds)
    if not values:
        raise ValueError("success rate of an empty list")
    return sum(r < threshold for r in values) / len(values)


def top_count(alpha: float, total: int) -> int:
    # ceiling, guarded against products like 0.07 * 100 = 7.000000000000001
    return max(1, math.ceil(alpha * total - 1e-9))


@dataclass
class Candidate:
    id: str
    score: float
    binder: bool = False
    best: bool = False


@dataclass
class ScreenPanel:
    target: str
    candidates: list[Candidate] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.candidates and not any(c.binder for c in self.candidates):
            raise ValueError(f"panel {self.target!r} has no true binder")

    def ranked(self) -> list[Candidate]:
        """Descending score; ties broken by candidate id."""
        by_id = sorted(self.candidates, key=lambda c: c.id)
        return sorted(by_id, key=lambda c: -c.score)


def enrichment_factor(panel: ScreenPanel, alpha: float) -> float:
    """True binders in the top ceil(alpha*M) over (total binders * alpha)."""
    ranked = panel.ranked()
    if not ranked:
        raise ValueError("empty panel")
    top = ranked[:top_count(alpha, len(ranked))]
    n_binders = sum(c.binder for c in ranked)
    return sum(c.binder for c in top) / (n_binders * alpha)


def screening_success(panels: Sequence[ScreenPanel], alpha: float) -> float:
    """Fraction of targets whose best ligand ranks within the top ceil(alpha*M)."""
    if not panels:
        raise ValueError("no panels")
    hits = 0
    for panel in panels:
        ranked = panel.ranked()
        top = ranked[:top_count(alpha, len(ranked))]
        hits += any(c.best for c in top)
    return hits / len(panels)


def interaction_reproducibility(pred: Iterable, native: Iterable) -> float:
    """(1 + shared) / (2 + size of the union) over interaction sets."""
    pred_set, native_set = set(pred), set(native)
    return (1 + len(pred_set & native_set)) / (2 + len(pred_set | native_set))
