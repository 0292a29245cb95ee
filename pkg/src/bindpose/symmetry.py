"""Equivalent atom indexings of a ligand (automorphisms of its colored graph)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bindpose.chemio import LigandMol

DEFAULT_CAP = 1000


@dataclass(frozen=True)
class EquivalentIndexSet:
    """``perms[s, i]`` is the native index matched to predicted atom ``i``."""

    perms: np.ndarray
    truncated: bool = False

    def __len__(self) -> int:
        return int(self.perms.shape[0])

    @classmethod
    def identity(cls, n: int) -> "EquivalentIndexSet":
        return cls(np.arange(n, dtype=np.int64)[None, :])


def atom_colors(mol: LigandMol) -> list[tuple]:
    return [
        (a.element, a.charge, a.aromatic, tuple(sorted(rs)))
        for a, rs in zip(mol.atoms, mol.ring_sizes)
    ]


def _refine(colors: list[tuple], adj: list[dict[int, str]]) -> list[int]:
    """Color refinement to a stable partition; returns integer cell labels."""
    palette = {c: k for k, c in enumerate(sorted(set(colors), key=repr))}
    labels = [palette[c] for c in colors]
    while True:
        signatures = [
            (labels[v], tuple(sorted((labels[u], o) for u, o in adj[v].items())))
            for v in range(len(labels))
        ]
        palette = {s: k for k, s in enumerate(sorted(set(signatures)))}
        new = [palette[s] for s in signatures]
        if len(set(new)) == len(set(labels)):
            return new
        labels = new


def enumerate_equivalent_indexes(mol: LigandMol, cap: int = DEFAULT_CAP) -> EquivalentIndexSet:
    """All automorphisms preserving atom colors and bond orders, lexicographically ordered.

    Atom colors are (element, formal charge, aromatic flag, ring sizes). The
    search stops after ``cap`` permutations and sets ``truncated``.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    n = len(mol.atoms)
    adj: list[dict[int, str]] = [dict() for _ in range(n)]
    for b in mol.bonds:
        adj[b.i][b.j] = b.order
        adj[b.j][b.i] = b.order
    cells = _refine(atom_colors(mol), adj)
    candidates = [[w for w in range(n) if cells[w] == cells[v]] for v in range(n)]

    found: list[list[int]] = []
    image = [-1] * n
    used = [False] * n

    def consistent(v: int, w: int) -> bool:
        for u in range(v):
            pu = image[u]
            order = adj[v].get(u)
            if order is None:
                if pu in adj[w]:
                    return False
            elif adj[w].get(pu) != order:
                return False
        return True

    def search(v: int) -> bool:
        if v == n:
            found.append(list(image))
            # one extra hit tells a genuine cut-off from a group of exactly cap
            return len(found) > cap
        for w in candidates[v]:
            if used[w] or not consistent(v, w):
                continue
            image[v] = w
            used[w] = True
            stop = search(v + 1)
            used[w] = False
            image[v] = -1
            if stop:
                return True
        return False

    search(0)
    truncated = len(found) > cap
    perms = np.array(found[:cap], dtype=np.int64).reshape(-1, n)
    return EquivalentIndexSet(perms, truncated)
