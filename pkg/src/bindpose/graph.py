"""Complete protein-ligand graphs: featurization, initialization, sampling, I/O."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from typing import BinaryIO

import networkx as nx
import numpy as np

from bindpose import residues
from bindpose.chemio import LigandMol, Pocket

# all coordinates, distances and affinities live at 1/10 scale inside the graph
SCALE = 0.1

LIGAND, PROTEIN_CORE, PROTEIN_CONTEXT = 0, 1, 2
CORE_ATOM_NAMES = ("CA", "CB")

LIGAND_ELEMENTS = ("C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "other")
PROTEIN_ELEMENTS = ("C", "N", "O", "S")
LIGAND_HYBRIDIZATIONS = ("SP", "SP2", "SP3", "SP3D", "SP3D2", "other")
PROTEIN_HYBRIDIZATIONS = ("SP", "SP2", "SP3")
FORMAL_CHARGES = (-2, -1, 0, 1, 2, 3)
RING_SIZES = (3, 4, 5, 6, 7, 8)
# bond classes; index 0 means "no covalent bond"
BOND_CLASSES = ("none", "single", "double", "triple", "aromatic")

PROTEIN_GROUPS = {
    "element": 4, "degree": 5, "implicit_valence": 5, "num_hs": 5,
    "hybridization": 3, "residue": 20, "atom_name": 37,
}
LIGAND_GROUPS = {
    "element": 10, "degree": 6, "implicit_valence": 5, "num_hs": 5,
    "hybridization": 6, "charge": 6, "ring_size": 6, "aromatic": 1,
}
PROTEIN_DIM = sum(PROTEIN_GROUPS.values())
LIGAND_DIM = sum(LIGAND_GROUPS.values())
EDGE_DIM = 7
EDGE_COVALENT, EDGE_DISTANCE = 0, 1
EDGE_BOND = slice(2, 7)

MAGIC = b"BPGR"
FORMAT_VERSION = 1


class FeaturizeError(ValueError):
    pass


def _offsets(groups: dict[str, int]) -> dict[str, int]:
    out, pos = {}, 0
    for k, v in groups.items():
        out[k] = pos
        pos += v
    return out


PROTEIN_OFFSETS = _offsets(PROTEIN_GROUPS)
LIGAND_OFFSETS = _offsets(LIGAND_GROUPS)


def _bin(value: int, size: int) -> int:
    return min(max(int(value), 0), size - 1)


@dataclass
class ComplexGraph:
    """Dense complete graph over ligand heavy atoms followed by pocket heavy atoms.

    ``node_feats`` is ``[N, 79]``; ligand rows occupy the first 45 columns and
    are zero beyond. Classification labels used by the masking objective are
    kept alongside (``atom_class`` is the ligand element index for ligand
    nodes and the folded atom-name index for protein nodes).
    """

    node_feats: np.ndarray
    edge_feats: np.ndarray
    coords: np.ndarray
    native: np.ndarray
    roles: np.ndarray
    rigid: np.ndarray
    atom_class: np.ndarray
    residue_class: np.ndarray
    bond_class: np.ndarray
    name: str = ""
    affinity: float | None = None
    centroid: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __len__(self) -> int:
        return int(self.roles.shape[0])

    @property
    def ligand_mask(self) -> np.ndarray:
        return self.roles == LIGAND

    @property
    def n_ligand(self) -> int:
        return int(self.ligand_mask.sum())

    @property
    def core_mask(self) -> np.ndarray:
        return self.roles != PROTEIN_CONTEXT

    def node_feature(self, i: int) -> np.ndarray:
        width = LIGAND_DIM if self.roles[i] == LIGAND else PROTEIN_DIM
        return self.node_feats[i, :width]

    def subset(self, index: np.ndarray) -> "SubGraph":
        index = np.asarray(index, dtype=np.int64)
        grid = np.ix_(index, index)
        return SubGraph(
            node_feats=self.node_feats[index],
            edge_feats=self.edge_feats[grid],
            coords=self.coords[index],
            native=self.native[index],
            roles=self.roles[index],
            rigid=self.rigid[index],
            atom_class=self.atom_class[index],
            residue_class=self.residue_class[index],
            bond_class=self.bond_class[grid],
            name=self.name,
            affinity=self.affinity,
            centroid=self.centroid,
            parent_index=index,
        )

    def copy(self, **changes) -> "ComplexGraph":
        return replace(self, **changes)

    def ligand_coords(self, native: bool = False) -> np.ndarray:
        """Ligand coordinates in Angstrom."""
        src = self.native if native else self.coords
        return src[self.ligand_mask] / SCALE

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "affinity": self.affinity,
            "centroid": (self.centroid / SCALE).tolist(),
            "scale": SCALE,
            "nodes": [
                {
                    "role": ("ligand", "protein_core", "protein_context")[int(r)],
                    "rigid_part": int(p),
                    "features": self.node_feature(i).tolist(),
                    "coords": (self.coords[i] / SCALE).tolist(),
                }
                for i, (r, p) in enumerate(zip(self.roles, self.rigid))
            ],
            "edges": self.edge_feats.tolist(),
        }

    def save(self, fh: BinaryIO) -> None:
        write_graph(self, fh)


@dataclass
class SubGraph(ComplexGraph):
    parent_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


# ---------------------------------------------------------------- featurization


def _ligand_hybridization(atom_bonds: list[str], degree: int, num_hs: int) -> str:
    if "aromatic" in atom_bonds:
        return "SP2"
    n_double = atom_bonds.count("double")
    if "triple" in atom_bonds or n_double >= 2:
        return "SP"
    if n_double == 1:
        return "SP2"
    steric = degree + num_hs
    if steric == 5:
        return "SP3D"
    if steric >= 6:
        return "SP3D2"
    return "SP3"


def rotatable_bonds(mol: LigandMol) -> list[tuple[int, int]]:
    """Acyclic single bonds whose endpoints both have heavy degree >= 2."""
    g = nx.Graph()
    g.add_nodes_from(range(len(mol.atoms)))
    g.add_edges_from((b.i, b.j) for b in mol.bonds)
    bridges = {frozenset(e) for e in nx.bridges(g)}
    out = []
    for b in mol.bonds:
        if b.order != "single" or frozenset((b.i, b.j)) not in bridges:
            continue
        if g.degree(b.i) >= 2 and g.degree(b.j) >= 2:
            out.append((b.i, b.j))
    return out


def ligand_rigid_parts(mol: LigandMol) -> np.ndarray:
    """Connected-component label per atom after cutting rotatable bonds."""
    rot = {frozenset(e) for e in rotatable_bonds(mol)}
    g = nx.Graph()
    g.add_nodes_from(range(len(mol.atoms)))
    g.add_edges_from((b.i, b.j) for b in mol.bonds if frozenset((b.i, b.j)) not in rot)
    labels = np.zeros(len(mol.atoms), dtype=np.int64)
    comps = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])
    for k, comp in enumerate(comps):
        labels[comp] = k
    return labels


def ligand_node_features(mol: LigandMol, strict: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """``[n, 45]`` feature block and element class per atom."""
    n = len(mol.atoms)
    feats = np.zeros((n, LIGAND_DIM))
    elem_cls = np.zeros(n, dtype=np.int64)
    adj = mol.neighbors()
    off = LIGAND_OFFSETS
    for i, atom in enumerate(mol.atoms):
        if atom.element in LIGAND_ELEMENTS:
            e = LIGAND_ELEMENTS.index(atom.element)
        elif strict:
            raise FeaturizeError(f"element {atom.element!r} outside ligand vocabulary")
        else:
            e = LIGAND_ELEMENTS.index("other")
        elem_cls[i] = e
        orders = [o for _, o in adj[i]]
        degree = len(adj[i])
        feats[i, off["element"] + e] = 1
        feats[i, off["degree"] + _bin(degree, 6)] = 1
        feats[i, off["implicit_valence"] + _bin(atom.num_hs, 5)] = 1
        feats[i, off["num_hs"] + _bin(atom.num_hs, 5)] = 1
        hyb = _ligand_hybridization(orders, degree, atom.num_hs)
        feats[i, off["hybridization"] + LIGAND_HYBRIDIZATIONS.index(hyb)] = 1
        chg = _bin(atom.charge - FORMAL_CHARGES[0], len(FORMAL_CHARGES))
        feats[i, off["charge"] + chg] = 1
        for size in mol.ring_sizes[i]:
            feats[i, off["ring_size"] + RING_SIZES.index(size)] = 1
        feats[i, off["aromatic"]] = float(atom.aromatic)
    return feats, elem_cls


def _protein_nodes(pocket: Pocket):
    """Yield per-atom records and collect intra-residue bonds."""
    records = []
    bonds: list[tuple[int, int, int]] = []
    backbone: list[tuple[int | None, int | None]] = []  # (N index, C index) per residue
    for r_idx, res in enumerate(pocket.residues):
        tmpl_atoms, tmpl_bonds = residues.template(res.name)
        local: dict[str, int] = {}
        for a in res.atoms:
            local[a.name] = len(records)
            records.append((r_idx, res, a))
        for n1, n2, order in tmpl_bonds:
            if n1 in local and n2 in local:
                bonds.append((local[n1], local[n2], order))
        backbone.append((local.get("N"), local.get("C")))
    return records, bonds, backbone


def featurize(pocket: Pocket, ligand: LigandMol, affinity: float | None = None,
              strict: bool = True, name: str = "") -> ComplexGraph:
    """Build the complete graph over ligand heavy atoms and all pocket heavy atoms."""
    if not pocket.residues:
        raise FeaturizeError("empty pocket")
    n_lig = len(ligand.atoms)
    lig_feats, lig_elem = ligand_node_features(ligand, strict=strict)
    records, p_bonds, backbone = _protein_nodes(pocket)
    n_prot = len(records)
    n = n_lig + n_prot

    node_feats = np.zeros((n, PROTEIN_DIM))
    node_feats[:n_lig, :LIGAND_DIM] = lig_feats
    coords = np.zeros((n, 3))
    coords[:n_lig] = ligand.coords
    roles = np.full(n, LIGAND, dtype=np.int64)
    rigid = np.zeros(n, dtype=np.int64)
    atom_class = np.full(n, -1, dtype=np.int64)
    residue_class = np.full(n, -1, dtype=np.int64)
    atom_class[:n_lig] = lig_elem
    lig_parts = ligand_rigid_parts(ligand)
    rigid[:n_lig] = lig_parts
    n_lig_parts = int(lig_parts.max()) + 1

    bond_class = np.zeros((n, n), dtype=np.int64)
    for b in ligand.bonds:
        cls = BOND_CLASSES.index(b.order)
        bond_class[b.i, b.j] = bond_class[b.j, b.i] = cls

    for i, j, order in p_bonds:
        bond_class[n_lig + i, n_lig + j] = bond_class[n_lig + j, n_lig + i] = order

    # peptide links between consecutive pocket residues
    for r in range(len(backbone) - 1):
        c_idx, n_idx = backbone[r][1], backbone[r + 1][0]
        if c_idx is None or n_idx is None:
            continue
        ca = np.asarray(records[c_idx][2].coords)
        nb = np.asarray(records[n_idx][2].coords)
        if np.linalg.norm(ca - nb) < 1.75:
            bond_class[n_lig + c_idx, n_lig + n_idx] = bond_class[n_lig + n_idx, n_lig + c_idx] = 1

    degree = (bond_class[n_lig:, n_lig:] > 0).sum(axis=1)
    off = PROTEIN_OFFSETS
    for k, (r_idx, res, atom) in enumerate(records):
        i = n_lig + k
        tmpl_atoms, _ = residues.template(res.name)
        element, num_hs, hyb = tmpl_atoms[atom.name]
        deg = int(degree[k])
        # termini of the pocket fragment still carry their peptide partner
        if atom.name == "N" and deg < (3 if res.name == "PRO" else 2):
            deg += 1
        if atom.name == "C" and res.atom("OXT") is None and deg < 3:
            deg += 1
        if element not in PROTEIN_ELEMENTS:
            raise FeaturizeError(f"protein element {element!r} unsupported")
        node_feats[i, off["element"] + PROTEIN_ELEMENTS.index(element)] = 1
        node_feats[i, off["degree"] + _bin(deg, 5)] = 1
        node_feats[i, off["implicit_valence"] + _bin(num_hs, 5)] = 1
        node_feats[i, off["num_hs"] + _bin(num_hs, 5)] = 1
        node_feats[i, off["hybridization"] + PROTEIN_HYBRIDIZATIONS.index(hyb)] = 1
        aa = residues.AMINO_ACIDS.index(res.name)
        node_feats[i, off["residue"] + aa] = 1
        node_feats[i, off["atom_name"] + residues.ATOM_NAMES.index(atom.name)] = 1
        coords[i] = atom.coords
        roles[i] = PROTEIN_CORE if atom.name in CORE_ATOM_NAMES else PROTEIN_CONTEXT
        rigid[i] = n_lig_parts + r_idx
        atom_class[i] = residues.ATOM_NAMES.index(residues.target_atom_name(res.name, atom.name))
        residue_class[i] = aa

    coords = coords * SCALE
    edge_feats = build_edge_features(coords, rigid, bond_class)
    ca = np.array([res.ca for res in pocket.residues]) * SCALE
    return ComplexGraph(
        node_feats=node_feats,
        edge_feats=edge_feats,
        coords=coords.copy(),
        native=coords.copy(),
        roles=roles,
        rigid=rigid,
        atom_class=atom_class,
        residue_class=residue_class,
        bond_class=bond_class,
        name=name or ligand.name,
        affinity=affinity,
        centroid=ca.mean(axis=0),
    )


def build_edge_features(coords: np.ndarray, rigid: np.ndarray, bond_class: np.ndarray) -> np.ndarray:
    n = coords.shape[0]
    edges = np.zeros((n, n, EDGE_DIM))
    edges[..., EDGE_COVALENT] = (bond_class > 0).astype(np.float64)
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    same_part = rigid[:, None] == rigid[None, :]
    edges[..., EDGE_DISTANCE] = np.where(same_part, dist, -1.0)
    edges[..., EDGE_BOND] = np.eye(len(BOND_CLASSES))[bond_class]
    return edges


# ---------------------------------------------------------------- stochastic steps


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def init_ligand_coords(graph: ComplexGraph, rng_seed, sigma: float = 10.0) -> ComplexGraph:
    """Draw ligand coordinates iid from N(pocket centroid, sigma^2 I); sigma in Angstrom."""
    rng = _rng(rng_seed)
    coords = graph.coords.copy()
    lig = graph.ligand_mask
    noise = rng.standard_normal((int(lig.sum()), 3)) * (sigma * SCALE)
    coords[lig] = graph.centroid[None, :] + noise
    return graph.copy(coords=coords)


class SamplingError(ValueError):
    pass


def sample_subgraph(graph: ComplexGraph, max_nodes: int, rng_seed) -> SubGraph:
    """All core atoms plus a uniform sample of context atoms, up to ``max_nodes``."""
    rng = _rng(rng_seed)
    core = np.flatnonzero(graph.core_mask)
    context = np.flatnonzero(~graph.core_mask)
    if core.size > max_nodes:
        raise SamplingError(f"{core.size} core atoms exceed max_nodes={max_nodes}")
    room = max_nodes - core.size
    if context.size > room:
        context = rng.choice(context, size=room, replace=False)
    index = np.sort(np.concatenate([core, context]))
    return graph.subset(index)


# ---------------------------------------------------------------- serialization

_HEADER = struct.Struct("<4sHIII")


def write_graph(graph: ComplexGraph, fh: BinaryIO) -> None:
    """Binary container: header, row-major little-endian tensors, JSON trailer."""
    n = len(graph)
    fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, n, PROTEIN_DIM, EDGE_DIM))
    for arr in (graph.node_feats, graph.edge_feats, graph.coords, graph.native):
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    for arr in (graph.roles, graph.rigid, graph.atom_class, graph.residue_class, graph.bond_class):
        fh.write(np.ascontiguousarray(arr, dtype="<i4").tobytes())
    meta = json.dumps({
        "name": graph.name,
        "affinity": graph.affinity,
        "centroid": [float(v) for v in graph.centroid],
    }).encode()
    fh.write(struct.pack("<I", len(meta)))
    fh.write(meta)


def read_graph(fh: BinaryIO) -> ComplexGraph:
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ValueError("truncated graph file")
    magic, version, n, d_node, d_edge = _HEADER.unpack(head)
    if magic != MAGIC:
        raise ValueError("not a bindpose graph file")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported graph format version {version}")

    node_feats = np.frombuffer(fh.read(n * d_node * 8), dtype="<f8").reshape(n, d_node).astype(np.float64)
    edge_feats = np.frombuffer(fh.read(n * n * d_edge * 8), dtype="<f8").reshape(n, n, d_edge).astype(np.float64)
    coords = np.frombuffer(fh.read(n * 3 * 8), dtype="<f8").reshape(n, 3).astype(np.float64)
    native = np.frombuffer(fh.read(n * 3 * 8), dtype="<f8").reshape(n, 3).astype(np.float64)
    ints = [np.frombuffer(fh.read(n * 4), dtype="<i4").astype(np.int64) for _ in range(4)]
    bond_class = np.frombuffer(fh.read(n * n * 4), dtype="<i4").reshape(n, n).astype(np.int64)
    (meta_len,) = struct.unpack("<I", fh.read(4))
    meta = json.loads(fh.read(meta_len).decode())
    return ComplexGraph(
        node_feats=node_feats,
        edge_feats=edge_feats,
        coords=coords,
        native=native,
        roles=ints[0],
        rigid=ints[1],
        atom_class=ints[2],
        residue_class=ints[3],
        bond_class=bond_class,
        name=meta["name"],
        affinity=meta["affinity"],
        centroid=np.asarray(meta["centroid"], dtype=np.float64),
    )
