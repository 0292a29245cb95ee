"""Readers for the SDF V2000 and PDB ATOM-record subsets, plus pocket selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import networkx as nx
import numpy as np

from bindpose import residues

log = logging.getLogger(__name__)

BOND_ORDERS = {1: "single", 2: "double", 3: "triple", 4: "aromatic"}
BOND_CODES = {v: k for k, v in BOND_ORDERS.items()}
_BOND_VALENCE = {"single": 1.0, "double": 2.0, "triple": 3.0, "aromatic": 1.5}

# V2000 atom-block charge codes (4 = doublet radical, treated as neutral)
_CHARGE_CODES = {0: 0, 1: 3, 2: 2, 3: 1, 4: 0, 5: -1, 6: -2, 7: -3}
_CHARGE_TO_CODE = {0: 0, 3: 1, 2: 2, 1: 3, -1: 5, -2: 6, -3: 7}

_DEFAULT_VALENCES = {
    "C": (4,), "N": (3,), "O": (2,), "S": (2, 4, 6), "P": (3, 5), "B": (3,),
    "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,), "Se": (2, 4, 6),
}

WATER_NAMES = {"HOH", "WAT", "H2O", "DOD"}


class ParseError(ValueError):
    """Raised when an input file violates the supported format subset."""


class PocketError(ValueError):
    """Raised when pocket selection yields no residues."""


@dataclass(frozen=True)
class Atom:
    element: str
    charge: int
    coords: tuple[float, float, float]
    aromatic: bool = False
    num_hs: int = 0


@dataclass(frozen=True)
class Bond:
    i: int
    j: int
    order: str


@dataclass
class LigandMol:
    """Heavy-atom ligand graph.

    ``ring_sizes[i]`` holds the sizes (3-8) of the rings atom ``i`` sits in.
    """

    atoms: list[Atom]
    bonds: list[Bond]
    ring_sizes: list[frozenset[int]] = field(default_factory=list)
    name: str = ""

    def __post_init__(self) -> None:
        n = len(self.atoms)
        seen = set()
        for b in self.bonds:
            if not (0 <= b.i < n and 0 <= b.j < n) or b.i == b.j:
                raise ParseError("bond endpoint out of range")
            key = frozenset((b.i, b.j))
            if key in seen:
                raise ParseError(f"duplicate bond {b.i + 1}-{b.j + 1}")
            seen.add(key)
        if not self.ring_sizes:
            self.ring_sizes = find_ring_sizes(n, [(b.i, b.j) for b in self.bonds])

    def __len__(self) -> int:
        return len(self.atoms)

    @property
    def coords(self) -> np.ndarray:
        return np.array([a.coords for a in self.atoms], dtype=np.float64).reshape(-1, 3)

    def with_coords(self, coords: np.ndarray) -> "LigandMol":
        coords = np.asarray(coords, dtype=np.float64)
        atoms = [
            Atom(a.element, a.charge, tuple(float(v) for v in xyz), a.aromatic, a.num_hs)
            for a, xyz in zip(self.atoms, coords)
        ]
        return LigandMol(atoms, list(self.bonds), list(self.ring_sizes), self.name)

    def neighbors(self) -> list[list[tuple[int, str]]]:
        adj: list[list[tuple[int, str]]] = [[] for _ in self.atoms]
        for b in self.bonds:
            adj[b.i].append((b.j, b.order))
            adj[b.j].append((b.i, b.order))
        return adj

    def bond_order(self, i: int, j: int) -> str | None:
        for b in self.bonds:
            if {b.i, b.j} == {i, j}:
                return b.order
        return None


@dataclass(frozen=True)
class ProteinAtom:
    name: str
    element: str
    coords: tuple[float, float, float]


@dataclass
class Residue:
    name: str
    seq_id: int
    icode: str
    chain: str
    atoms: list[ProteinAtom]

    def atom(self, name: str) -> ProteinAtom | None:
        for a in self.atoms:
            if a.name == name:
                return a
        return None

    @property
    def ca(self) -> np.ndarray:
        a = self.atom("CA")
        assert a is not None
        return np.asarray(a.coords, dtype=np.float64)


@dataclass
class ProteinChain:
    residues: list[Residue]

    def __len__(self) -> int:
        return len(self.residues)

    @property
    def num_atoms(self) -> int:
        return sum(len(r.atoms) for r in self.residues)


@dataclass
class Pocket:
    residues: list[Residue]
    rule: str = "ligand-proximity"
    cutoff: float | None = 15.0


def find_ring_sizes(n_atoms: int, edges: Iterable[tuple[int, int]]) -> list[frozenset[int]]:
    """Per-atom sizes of the chordless rings (length 3-8) the atom belongs to."""
    g = nx.Graph()
    g.add_nodes_from(range(n_atoms))
    g.add_edges_from(edges)
    sizes: list[set[int]] = [set() for _ in range(n_atoms)]
    for cycle in nx.chordless_cycles(g, length_bound=8):
        if len(cycle) < 3:
            continue
        for a in cycle:
            sizes[a].add(len(cycle))
    return [frozenset(s) for s in sizes]


def _implicit_hs(element: str, charge: int, used_valence: float) -> int:
    allowed = _DEFAULT_VALENCES.get(element)
    if allowed is None:
        return 0
    used = int(np.ceil(used_valence - 1e-9))
    for v in allowed:
        if element == "C":
            target = v - abs(charge)
        elif element == "B":
            target = v - charge
        else:
            target = v + charge
        if target >= used:
            return target - used
    return 0


def _decode(text: str | bytes) -> str:
    if isinstance(text, bytes):
        return text.decode("utf-8", errors="replace")
    return text


def parse_sdf(text: str | bytes) -> LigandMol:
    """Parse one V2000 molfile/SDF record into a heavy-atom :class:`LigandMol`.

    Explicit hydrogens are folded into ``num_hs`` of their heavy neighbour;
    remaining valence is filled with implicit hydrogens. Aromaticity comes
    from bond type 4 only.
    """
    lines = _decode(text).splitlines()
    if len(lines) < 4:
        raise ParseError("truncated molfile: missing counts line")
    name = lines[0].strip()
    counts = lines[3]
    if "V3000" in counts:
        raise ParseError("V3000 molfiles are not supported")
    try:
        n_atoms = int(counts[0:3])
        n_bonds = int(counts[3:6])
    except ValueError as exc:
        raise ParseError(f"malformed counts line: {counts!r}") from exc
    if n_atoms <= 0:
        raise ParseError("malformed counts line: no atoms")

    atom_lines = lines[4:4 + n_atoms]
    bond_lines = lines[4 + n_atoms:4 + n_atoms + n_bonds]
    if len(atom_lines) != n_atoms or len(bond_lines) != n_bonds:
        raise ParseError("atom/bond count mismatch with counts line")

    elements: list[str] = []
    charges: list[int] = []
    coords: list[tuple[float, float, float]] = []
    for line in atom_lines:
        try:
            xyz = (float(line[0:10]), float(line[10:20]), float(line[20:30]))
        except ValueError as exc:
            raise ParseError(f"unparseable atom coordinates: {line!r}") from exc
        symbol = line[31:34].strip()
        if not symbol:
            raise ParseError(f"missing element symbol: {line!r}")
        code = line[36:39].strip()
        elements.append(symbol[0].upper() + symbol[1:].lower())
        charges.append(_CHARGE_CODES.get(int(code), 0) if code else 0)
        coords.append(xyz)

    raw_bonds: list[tuple[int, int, str]] = []
    for line in bond_lines:
        try:
            i, j, code = int(line[0:3]), int(line[3:6]), int(line[6:9])
        except ValueError as exc:
            raise ParseError(f"malformed bond line: {line!r}") from exc
        if not (1 <= i <= n_atoms and 1 <= j <= n_atoms):
            raise ParseError("bond endpoint out of range")
        if code not in BOND_ORDERS:
            raise ParseError(f"unsupported bond type code {code}")
        raw_bonds.append((i - 1, j - 1, BOND_ORDERS[code]))

    property_charges = False
    for line in lines[4 + n_atoms + n_bonds:]:
        if line.startswith("M  END"):
            break
        if line.startswith("M  CHG"):
            if not property_charges:
                # an M  CHG block supersedes every atom-block charge
                charges = [0] * n_atoms
                property_charges = True
            fields = line[6:].split()
            try:
                count = int(fields[0])
                for k in range(count):
                    idx, chg = int(fields[1 + 2 * k]), int(fields[2 + 2 * k])
                    charges[idx - 1] = chg
            except (ValueError, IndexError) as exc:
                raise ParseError(f"malformed M  CHG line: {line!r}") from exc

    is_h = [e in ("H", "D", "T") for e in elements]
    heavy = [k for k in range(n_atoms) if not is_h[k]]
    remap = {old: new for new, old in enumerate(heavy)}
    explicit_h = [0] * n_atoms
    used_valence = [0.0] * n_atoms
    aromatic = [False] * n_atoms
    bonds: list[Bond] = []
    for i, j, order in raw_bonds:
        used_valence[i] += _BOND_VALENCE[order]
        used_valence[j] += _BOND_VALENCE[order]
        if is_h[i] or is_h[j]:
            if is_h[i] and not is_h[j]:
                explicit_h[j] += 1
            elif is_h[j] and not is_h[i]:
                explicit_h[i] += 1
            continue
        if order == "aromatic":
            aromatic[i] = aromatic[j] = True
        bonds.append(Bond(remap[i], remap[j], order))

    atoms = []
    for k in heavy:
        implicit = _implicit_hs(elements[k], charges[k], used_valence[k])
        atoms.append(Atom(elements[k], charges[k], coords[k], aromatic[k], explicit_h[k] + implicit))
    if not atoms:
        raise ParseError("molecule has no heavy atoms")

    mol = LigandMol(atoms, bonds, name=name)
    g = nx.Graph()
    g.add_nodes_from(range(len(atoms)))
    g.add_edges_from((b.i, b.j) for b in bonds)
    if nx.number_connected_components(g) > 1:
        raise ParseError("multi-fragment molecule")
    return mol


def emit_sdf(mol: LigandMol, coords: np.ndarray | None = None) -> str:
    """Write a heavy-atom V2000 record (charges via ``M  CHG``)."""
    xyz = mol.coords if coords is None else np.asarray(coords, dtype=np.float64)
    out = [mol.name, "  bindpose", "",
           f"{len(mol.atoms):3d}{len(mol.bonds):3d}  0  0  0  0  0  0  0  0999 V2000"]
    for a, (x, y, z) in zip(mol.atoms, xyz):
        out.append(f"{x:10.4f}{y:10.4f}{z:10.4f} {a.element:<3s} 0{_CHARGE_TO_CODE.get(a.charge, 0):3d}  0  0  0  0  0  0  0  0  0  0")
    for b in mol.bonds:
        out.append(f"{b.i + 1:3d}{b.j + 1:3d}{BOND_CODES[b.order]:3d}  0")
    charged = [(k + 1, a.charge) for k, a in enumerate(mol.atoms) if a.charge]
    for start in range(0, len(charged), 8):
        chunk = charged[start:start + 8]
        out.append(f"M  CHG{len(chunk):3d}" + "".join(f"{k:4d}{c:4d}" for k, c in chunk))
    out.append("M  END")
    out.append("$$$$")
    return "\n".join(out) + "\n"


def _element_from_name(name_field: str) -> str:
    # canonical residues carry only C/N/O/S (and H), all one-letter
    return name_field.strip().lstrip("0123456789")[:1].upper()


def parse_pdb(text: str | bytes, chain: str | None = None, strict: bool = True) -> ProteinChain:
    """Read ATOM records of one chain into residues of heavy atoms.

    Only the first model and the first alternate location are used. With
    ``strict=False`` atom names outside the residue template are dropped
    instead of raising.
    """
    groups: dict[tuple[str, int, str], Residue] = {}
    order: list[tuple[str, int, str]] = []
    selected = chain
    saw_atom = False
    for line in _decode(text).splitlines():
        if line.startswith("ENDMDL"):
            break
        if not line.startswith("ATOM  "):
            continue
        saw_atom = True
        line = line.ljust(80)
        altloc = line[16]
        if altloc not in (" ", "A", "1"):
            continue
        chain_id = line[21].strip()
        if selected is None:
            selected = chain_id
        if chain_id != selected:
            continue
        resname = line[17:20].strip()
        if resname in WATER_NAMES:
            continue
        if resname not in residues.AMINO_ACIDS:
            raise ParseError(f"non-canonical residue {resname!r}")
        name = line[12:16].strip()
        element = line[76:78].strip().capitalize() or _element_from_name(line[12:16])
        if element in ("H", "D"):
            continue
        try:
            res_seq = int(line[22:26])
            xyz = (float(line[30:38]), float(line[38:46]), float(line[46:54]))
        except ValueError as exc:
            raise ParseError(f"unparseable coordinate field: {line.rstrip()!r}") from exc
        tmpl_atoms, _ = residues.template(resname)
        if name not in tmpl_atoms:
            if strict:
                raise ParseError(f"unknown atom name {name!r} in {resname} {res_seq}")
            log.warning("dropping unknown atom %s in %s %d", name, resname, res_seq)
            continue
        key = (chain_id, res_seq, line[26].strip())
        res = groups.get(key)
        if res is None:
            res = Residue(resname, res_seq, key[2], chain_id, [])
            groups[key] = res
            order.append(key)
        elif res.name != resname:
            raise ParseError(f"residue {res_seq} has conflicting names {res.name}/{resname}")
        if res.atom(name) is not None:
            raise ParseError(f"duplicate atom name {name!r} in {resname} {res_seq}")
        res.atoms.append(ProteinAtom(name, element, xyz))

    if not saw_atom or not order:
        raise ParseError("no ATOM records / empty chain")
    out = [groups[k] for k in order]
    for res in out:
        if res.atom("CA") is None:
            raise ParseError(f"residue {res.name} {res.seq_id} missing CA")
    return ProteinChain(out)


def emit_pdb(chain: ProteinChain | Pocket) -> str:
    lines = []
    serial = 1
    for res in chain.residues:
        for a in res.atoms:
            name = a.name if len(a.name) == 4 else f" {a.name:<3s}"
            x, y, z = a.coords
            lines.append(
                f"ATOM  {serial:5d} {name:4s} {res.name:3s} {res.chain or 'A':1s}{res.seq_id:4d}{res.icode or ' ':1s}   "
                f"{x:8.3f}{y:8.3f}{z:8.3f}{1.0:6.2f}{0.0:6.2f}          {a.element:>2s}"
            )
            serial += 1
    lines.append("END")
    return "\n".join(lines) + "\n"


def select_pocket(protein: ProteinChain, ligand: LigandMol, cutoff: float = 15.0) -> Pocket:
    """Residues whose CA lies within ``cutoff`` Angstrom of any ligand heavy atom."""
    if not protein.residues or not ligand.atoms:
        raise PocketError("protein and ligand must be nonempty")
    ca = np.stack([r.ca for r in protein.residues])
    lig = ligand.coords
    dist = np.sqrt(((ca[:, None, :] - lig[None, :, :]) ** 2).sum(-1)).min(axis=1)
    members = [r for r, d in zip(protein.residues, dist) if d <= cutoff and r.name not in WATER_NAMES]
    if not members:
        raise PocketError(f"empty pocket: no residue CA within {cutoff} A of the ligand")
    return Pocket(members, "ligand-proximity", cutoff)
