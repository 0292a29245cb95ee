"""Synthetic protein-ligand complexes for smoke tests and toy-scale training.

Ligands are an aromatic six-ring with short substituents (at most 12 heavy
atoms); pockets are a handful of ring-free residues grown around the ligand
with idealized bond lengths and angles (at most 40 heavy atoms).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from bindpose import residues
from bindpose.chemio import Atom, Bond, LigandMol, Pocket, ProteinAtom, ProteinChain, Residue, emit_pdb, emit_sdf

TOY_RESIDUES = ("ALA", "SER", "CYS", "VAL", "THR", "ASP", "ASN", "LEU", "ILE", "GLU", "GLN", "LYS", "MET", "GLY", "ARG")
_TETRAHEDRAL = math.radians(109.5)

# substituent recipes: (element, order to previous atom, parent offset in recipe or -1 for ring)
_SUBSTITUENTS = {
    "hydroxyl": [("O", "single", -1)],
    "amine": [("N", "single", -1)],
    "chloro": [("Cl", "single", -1)],
    "fluoro": [("F", "single", -1)],
    "methyl": [("C", "single", -1)],
    "hydroxymethyl": [("C", "single", -1), ("O", "single", 0)],
    "carboxyl": [("C", "single", -1), ("O", "double", 0), ("O", "single", 0)],
    "ethyl": [("C", "single", -1), ("C", "single", 0)],
    "methoxy": [("O", "single", -1), ("C", "single", 0)],
    "nitrile": [("C", "single", -1), ("N", "triple", 0)],
    "propyl": [("C", "single", -1), ("C", "single", 0), ("C", "single", 1)],
    "thiol": [("S", "single", -1)],
}


# idealized covalent bond lengths (Angstrom) by element pair and order
_BOND_LENGTH = {
    ("C", "C", "single"): 1.52, ("C", "N", "single"): 1.47, ("C", "O", "single"): 1.43,
    ("C", "S", "single"): 1.82, ("C", "F", "single"): 1.35, ("C", "Cl", "single"): 1.77,
    ("C", "O", "double"): 1.23, ("C", "N", "triple"): 1.16,
}


# radius giving 1.34 A to neighbours on a 1.39 A hexagon
_RING_N_RADIUS = (1.39 + math.sqrt(1.39 ** 2 - 4 * (1.39 ** 2 - 1.34 ** 2))) / 2

_PROTEIN_LENGTH = {
    ("C", "C", 1): 1.52, ("C", "N", 1): 1.46, ("C", "O", 1): 1.43, ("C", "S", 1): 1.81,
    ("C", "O", 2): 1.23, ("C", "N", 2): 1.33,
}


def _bond_length(a: str, b: str, order: str) -> float:
    return _BOND_LENGTH.get((a, b, order)) or _BOND_LENGTH[(b, a, order)]


def _protein_length(a: str, b: str, order: int) -> float:
    return _PROTEIN_LENGTH.get((a, b, order)) or _PROTEIN_LENGTH.get((b, a, order), 1.5)


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    a, b, c, d = q
    return np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
    ])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random proper rotation matrix."""
    return _random_rotation(rng)


def _place(parent: np.ndarray, grand: np.ndarray, length: float, torsion: float,
           ref: np.ndarray) -> np.ndarray:
    """Atom at ``length`` from ``parent`` with a tetrahedral angle to ``grand``."""
    b = parent - grand
    b /= np.linalg.norm(b)
    n = np.cross(b, ref)
    if np.linalg.norm(n) < 1e-6:
        n = np.cross(b, np.array([1.0, 0.0, 0.0]))
    n /= np.linalg.norm(n)
    m = np.cross(n, b)
    theta = math.pi - _TETRAHEDRAL
    direction = math.cos(theta) * b + math.sin(theta) * (math.cos(torsion) * m + math.sin(torsion) * n)
    return parent + length * direction


def make_ligand(rng: np.random.Generator, max_atoms: int = 12, name: str = "LIG") -> LigandMol:
    ring_n = rng.random() < 0.3
    elements = ["C"] * 6
    if ring_n:
        elements[rng.integers(6)] = "N"
    angles = np.arange(6) * math.pi / 3
    # a ring nitrogen sits closer to the centre so both of its bonds are 1.34 A
    radius = [_RING_N_RADIUS if e == "N" else 1.39 for e in elements]
    coords = [np.array([r * math.cos(t), r * math.sin(t), 0.0]) for r, t in zip(radius, angles)]
    bonds = [(k, (k + 1) % 6, "aromatic") for k in range(6)]
    free = [k for k in range(6) if elements[k] == "C"]
    rng.shuffle(free)
    n_subs = int(rng.integers(1, 4))
    names = list(_SUBSTITUENTS)
    for pos in free[:n_subs]:
        recipe = _SUBSTITUENTS[names[rng.integers(len(names))]]
        if len(elements) + len(recipe) > max_atoms:
            continue
        radial = coords[pos] / np.linalg.norm(coords[pos])
        tangent = np.array([-radial[1], radial[0], 0.0])
        local: list[int] = []
        for k, (elem, order, parent) in enumerate(recipe):
            anchor = pos if parent == -1 else local[parent]
            length = _bond_length(elements[anchor], elem, order)
            if parent == -1:
                xyz = coords[pos] + length * radial
            else:
                siblings = sum(1 for e in recipe[:k] if e[2] == parent)
                if order == "triple":
                    xyz = coords[anchor] + length * radial
                else:
                    sign = 1.0 if siblings % 2 == 0 else -1.0
                    step = 0.5 * radial + sign * 0.866 * tangent
                    if parent > 0:
                        step = 0.5 * radial - sign * 0.866 * tangent * (-1) ** parent
                    xyz = coords[anchor] + length * step / np.linalg.norm(step)
            local.append(len(elements))
            elements.append(elem)
            coords.append(xyz)
            bonds.append((anchor, local[-1], order))
    xyz = np.array(coords)
    xyz = xyz @ _random_rotation(rng).T
    atoms = []
    aromatic = {i for i, j, o in bonds if o == "aromatic"} | {j for i, j, o in bonds if o == "aromatic"}
    mol = LigandMol(
        [Atom(e, 0, tuple(float(v) for v in c), k in aromatic) for k, (e, c) in enumerate(zip(elements, xyz))],
        [Bond(i, j, o) for i, j, o in bonds],
        name=name,
    )
    # round-trip through the parser so hydrogen counts follow the reader's rules
    from bindpose.chemio import parse_sdf

    return parse_sdf(emit_sdf(mol))


def _build_residue(resname: str, ca: np.ndarray, rng: np.random.Generator, seq_id: int) -> Residue:
    atoms_t, bonds_t = residues.template(resname)
    names = [n for n in atoms_t if n != "OXT"]
    adj: dict[str, list[str]] = {n: [] for n in names}
    length: dict[tuple[str, str], float] = {}
    for a, b, order in bonds_t:
        if a in adj and b in adj:
            adj[a].append(b)
            adj[b].append(a)
            length[a, b] = length[b, a] = _protein_length(atoms_t[a][0], atoms_t[b][0], order)
    pos: dict[str, np.ndarray] = {"CA": ca}
    rot = _random_rotation(rng)
    tetra = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / math.sqrt(3)
    for k, nb in enumerate(adj["CA"]):
        pos[nb] = ca + length["CA", nb] * (rot @ tetra[k])
    parent = {nb: "CA" for nb in adj["CA"]}
    queue = list(adj["CA"])
    while queue:
        cur = queue.pop(0)
        kids = [c for c in adj[cur] if c not in pos]
        phase = rng.uniform(0, 2 * math.pi)
        for k, c in enumerate(kids):
            ref = pos[parent[cur]] - pos[cur]
            pos[c] = _place(pos[cur], pos[parent[cur]], length[cur, c], phase + 2 * math.pi * k / 3, np.cross(ref, [0.3, 0.5, 0.8]))
            parent[c] = cur
            queue.append(c)
    atoms = [ProteinAtom(n, atoms_t[n][0], tuple(float(v) for v in pos[n])) for n in names]
    return Residue(resname, seq_id, "", "A", atoms)


def make_pocket(ligand: LigandMol, rng: np.random.Generator, max_atoms: int = 40,
                n_residues: tuple[int, int] = (5, 7)) -> ProteinChain:
    lig = ligand.coords
    center = lig.mean(axis=0)
    out: list[Residue] = []
    total = 0
    target = int(rng.integers(n_residues[0], n_residues[1] + 1))
    tries = 0
    while len(out) < target and tries < 2000:
        tries += 1
        resname = TOY_RESIDUES[rng.integers(len(TOY_RESIDUES))]
        size = len([n for n in residues.template(resname)[0] if n != "OXT"])
        if total + size > max_atoms:
            continue
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        ca = center + direction * rng.uniform(5.5, 8.5)
        res = _build_residue(resname, ca, rng, len(out) + 1)
        xyz = np.array([a.coords for a in res.atoms])
        if np.min(np.linalg.norm(xyz[:, None] - lig[None], axis=-1)) < 3.2:
            continue
        if out:
            other = np.array([a.coords for r in out for a in r.atoms])
            if np.min(np.linalg.norm(xyz[:, None] - other[None], axis=-1)) < 2.8:
                continue
        out.append(res)
        total += size
    return ProteinChain(out)


@dataclass
class ToyComplex:
    complex_id: str
    protein: ProteinChain
    ligand: LigandMol
    affinity: float
    uniprot_id: str
    protein_name: str
    ligand_code: str

    @property
    def pocket(self) -> Pocket:
        return Pocket(list(self.protein.residues), "ligand-proximity", 15.0)


def make_complex(rng: np.random.Generator, index: int, max_ligand: int = 12, max_pocket: int = 40) -> ToyComplex:
    ligand = make_ligand(rng, max_ligand, name=f"toy{index:02d}")
    protein = make_pocket(ligand, rng, max_pocket)
    code = "".join(chr(ord("A") + int(v)) for v in rng.integers(0, 26, 3))
    return ToyComplex(
        complex_id=f"toy{index:02d}",
        protein=protein,
        ligand=ligand,
        affinity=float(np.round(rng.uniform(4.0, 9.0), 2)),
        uniprot_id=f"Q{index:05d}",
        protein_name=f"synthetic protein {index}",
        ligand_code=code,
    )


def make_toy_set(n: int = 8, seed: int = 7) -> list[ToyComplex]:
    rng = np.random.default_rng(seed)
    return [make_complex(rng, k) for k in range(n)]


def make_unlabeled_pairs(n: int = 50, seed: int = 11):
    """Graphs pairing each synthetic pocket with a ligand from a different complex.

    The ligand keeps its own coordinates (centred on the pocket); these
    pairs carry no pose or affinity label.
    """
    from bindpose.graph import featurize

    rng = np.random.default_rng(seed)
    pool = [make_complex(rng, k) for k in range(n)]
    graphs = []
    for k, c in enumerate(pool):
        other = pool[(k + 1 + int(rng.integers(n - 1))) % n] if n > 1 else c
        graphs.append(featurize(c.pocket, other.ligand, name=f"{c.complex_id}:{other.complex_id}"))
    return graphs


MANIFEST_HEADER = ("complex_id", "uniprot_id", "protein_name", "ligand_code", "affinity", "split")


def write_toy_set(directory: str | Path, complexes: list[ToyComplex], split: str = "train") -> Path:
    """Write ``<id>_protein.pdb``, ``<id>_ligand.sdf`` and ``manifest.tsv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for c in complexes:
        (directory / f"{c.complex_id}_protein.pdb").write_text(emit_pdb(c.protein))
        (directory / f"{c.complex_id}_ligand.sdf").write_text(emit_sdf(c.ligand))
    manifest = directory / "manifest.tsv"
    with manifest.open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for c in complexes:
            writer.writerow([c.complex_id, c.uniprot_id, c.protein_name, c.ligand_code, f"{c.affinity:.2f}", split])
    return manifest


def bundled_dir() -> Path:
    return Path(__file__).parent / "data" / "toy"


if __name__ == "__main__":
    write_toy_set(bundled_dir(), make_toy_set())
