"""Heavy-atom templates for the 20 canonical amino acids.

Each template lists, per PDB atom name, the element, the number of attached
hydrogens in the neutral residue and a hybridization label, plus the
intra-residue covalent bonds with their orders.  Charged states (Lys NZ+,
Asp/Glu carboxylates, Arg guanidinium) are represented in their neutral
form; the node features only need a consistent convention.
"""

from __future__ import annotations

AMINO_ACIDS: tuple[str, ...] = (
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
    "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL",
)

# 37 heavy-atom names over all canonical residues (backbone first).
ATOM_NAMES: tuple[str, ...] = (
    "N", "CA", "C", "CB", "O", "CG", "CG1", "CG2", "OG", "OG1", "SG", "CD",
    "CD1", "CD2", "ND1", "ND2", "OD1", "OD2", "SD", "CE", "CE1", "CE2", "CE3",
    "NE", "NE1", "NE2", "OE1", "OE2", "CH2", "NH1", "NH2", "OH", "CZ", "CZ2",
    "CZ3", "NZ", "OXT",
)

# Chemically equivalent side-chain names; the second of each pair is folded
# onto the first when used as a classification target.
SYMMETRIC_NAMES: dict[str, dict[str, str]] = {
    "VAL": {"CG2": "CG1"},
    "LEU": {"CD2": "CD1"},
    "ASP": {"OD2": "OD1"},
    "GLU": {"OE2": "OE1"},
    "ARG": {"NH2": "NH1"},
    "PHE": {"CD2": "CD1", "CE2": "CE1"},
    "TYR": {"CD2": "CD1", "CE2": "CE1"},
}

SP, SP2, SP3 = "SP", "SP2", "SP3"

# name -> (element, hydrogens, hybridization)
_BACKBONE = {
    "N": ("N", 1, SP2),
    "CA": ("C", 1, SP3),
    "C": ("C", 0, SP2),
    "O": ("O", 0, SP2),
    "OXT": ("O", 1, SP2),
}
_BACKBONE_BONDS = [("N", "CA", 1), ("CA", "C", 1), ("C", "O", 2), ("C", "OXT", 1)]

_SIDE_CHAINS: dict[str, tuple[dict[str, tuple[str, int, str]], list[tuple[str, str, int]]]] = {
    "ALA": ({"CB": ("C", 3, SP3)}, [("CA", "CB", 1)]),
    "ARG": (
        {
            "CB": ("C", 2, SP3), "CG": ("C", 2, SP3), "CD": ("C", 2, SP3),
            "NE": ("N", 1, SP2), "CZ": ("C", 0, SP2), "NH1": ("N", 1, SP2),
            "NH2": ("N", 2, SP2),
        },
        [("CA", "CB", 1), ("CB", "CG", 1), ("CG", "CD", 1), ("CD", "NE", 1),
         ("NE", "CZ", 1), ("CZ", "NH1", 2), ("CZ", "NH2", 1)],
    ),
    "ASN": (
        {"CB": ("C", 2, SP3), "CG": ("C", 0, SP2), "OD1": ("O", 0, SP2), "ND2": ("N", 2, SP2)},
        [("CA", "CB", 1), ("CB", "CG", 1), ("CG", "OD1", 2), ("CG", "ND2", 1)],
    ),
    "ASP": (
        {"CB": ("C", 2, SP3), "CG": ("C", 0, SP2), "OD1": ("O", 0, SP2), "OD2": ("O", 1, SP2)},
        [("CA", "CB", 1), ("CB", "CG", 1), ("CG", "OD1", 2), ("CG", "OD2", 1)],
    ),
    "CYS": ({"CB": ("C", 2, SP3), "SG": ("S", 1, SP3)}, [("CA", "CB", 1), ("CB", "SG", 1)]),
    "GLN": (
        {"CB": ("C", 2, SP3), "CG": ("C", 2, SP3), "CD": ("C", 0, SP2),
         "OE1": ("O", 0, SP2), "NE2": ("N", 2, SP2)},
        [("CA", "CB", 1), ("CB", "CG", 1), ("CG", "CD", 1), ("CD", "OE1", 2), ("CD", "NE2", 1)],
    ),
    "GLU": (
        {"CB": ("C", 2, SP3), "CG": ("C", 2, SP3), "CD": ("C", 0, SP2),
         "OE1": ("O", 0, SP2), "OE2": ("O", 1, SP2)},
        [("CA", "CB", 1), ("CB", "CG", 1), ("CG", "CD", 1), ("CD", "OE1", 2), ("CD", "OE2", 1)],
    ),
    "GLY": ({}, []),
    "HIS": (
        {"CB": ("C", 2, SP3), "CG": ("C", 0, SP2), "ND1": ("N", 1, SP2),
         "CD2": ("C", 1, SP2), "CE1": ("C", 1, SP2), "NE2": ("N", 0, SP2)},
        [("CA", "CB", 1), ("CB", "CG", 1), ("CG", "ND1", 4), ("ND1", "CE1", 4),
         ("CE1", "NE2", 4), ("NE2", "CD2", 4), ("CD2", "CG", 4)],
    ),
    "ILE": (
        {"CB": ("C", 1, SP3), "CG1": ("C", 2, SP3), "CG2": ("C", 3, SP3), "CD1": ("C", 3, SP3)},
        [("CA", "CB", 1), ("CB", "CG1", 1), ("CB", "CG2", 1), ("CG1", "CD1", 1)],
    ),
    "LEU": (
        {"CB": ("C", 2, SP3), "CG": ("C", 1, SP3), "CD1": ("C", 3, SP3), "CD2": ("C", 3, SP3)},
        [("CA", "CB", 1), ("CB", "CG", 1), ("CG", "CD1", 1), ("CG", "CD2", 1)],
    ),
    "LYS": (
        {"CB": ("C", 2, SP3), "CG": ("C", 2, SP3), "CD": ("C", 2, SP3),
         "CE": ("C", 2, SP3), "NZ": ("N", 2, SP3)},
        [("CA", "CB", 1), ("CB", "CG", 1), ("CG", "CD", 1), ("CD", "CE", 1), ("CE", "NZ", 1)],
    ),
    "MET": (
        {"CB": ("C", 2, SP3), "CG": ("C", 2, SP3), "SD": ("S", 0, SP3), "CE": ("C", 3, SP3)},
        [("CA", "CB", 1), ("CB", "CG", 1), ("CG", "SD", 1), ("SD", "CE", 1)],
    ),
    "PHE": (
        {"CB": ("C", 2, SP3), "CG": ("C", 0, SP2), "CD1": ("C", 1, SP2), "CD2": ("C", 1, SP2),
         "CE1": ("C", 1, SP2), "CE2": ("C", 1, SP2), "CZ": ("C", 1, SP2)},
        [("CA", "CB", 1), ("CB", "CG", 1), ("CG", "CD1", 4), ("CD1", "CE1", 4),
         ("CE1", "CZ", 4), ("CZ", "CE2", 4), ("CE2", "CD2", 4), ("CD2", "CG", 4)],
    ),
    "PRO": (
        {"CB": ("C", 2, SP3), "CG": ("C", 2, SP3), "CD": ("C", 2, SP3)},
        [("CA", "CB", 1), ("CB", "CG", 1), ("CG", "CD", 1), ("CD", "N", 1)],
    ),
    "SER": ({"CB": ("C", 2, SP3), "OG": ("O", 1, SP3)}, [("CA", "CB", 1), ("CB", "OG", 1)]),
    "THR": (
        {"CB": ("C", 1, SP3), "OG1": ("O", 1, SP3), "CG2": ("C", 3, SP3)},
        [("CA", "CB", 1), ("CB", "OG1", 1), ("CB", "CG2", 1)],
    ),
    "TRP": (
        {"CB": ("C", 2, SP3), "CG": ("C", 0, SP2), "CD1": ("C", 1, SP2), "CD2": ("C", 0, SP2),
         "NE1": ("N", 1, SP2), "CE2": ("C", 0, SP2), "CE3": ("C", 1, SP2),
         "CZ2": ("C", 1, SP2), "CZ3": ("C", 1, SP2), "CH2": ("C", 1, SP2)},
        [("CA", "CB", 1), ("CB", "CG", 1), ("CG", "CD1", 4), ("CD1", "NE1", 4),
         ("NE1", "CE2", 4), ("CE2", "CD2", 4), ("CD2", "CG", 4), ("CD2", "CE3", 4),
         ("CE3", "CZ3", 4), ("CZ3", "CH2", 4), ("CH2", "CZ2", 4), ("CZ2", "CE2", 4)],
    ),
    "TYR": (
        {"CB": ("C", 2, SP3), "CG": ("C", 0, SP2), "CD1": ("C", 1, SP2), "CD2": ("C", 1, SP2),
         "CE1": ("C", 1, SP2), "CE2": ("C", 1, SP2), "CZ": ("C", 0, SP2), "OH": ("O", 1, SP3)},
        [("CA", "CB", 1), ("CB", "CG", 1), ("CG", "CD1", 4), ("CD1", "CE1", 4),
         ("CE1", "CZ", 4), ("CZ", "CE2", 4), ("CE2", "CD2", 4), ("CD2", "CG", 4),
         ("CZ", "OH", 1)],
    ),
    "VAL": (
        {"CB": ("C", 1, SP3), "CG1": ("C", 3, SP3), "CG2": ("C", 3, SP3)},
        [("CA", "CB", 1), ("CB", "CG1", 1), ("CB", "CG2", 1)],
    ),
}


def template(resname: str) -> tuple[dict[str, tuple[str, int, str]], list[tuple[str, str, int]]]:
    """Return ``(atoms, bonds)`` for a canonical residue.

    Bond orders use the SDF codes: 1 single, 2 double, 3 triple, 4 aromatic.
    """
    side_atoms, side_bonds = _SIDE_CHAINS[resname]
    atoms = dict(_BACKBONE)
    atoms.update(side_atoms)
    if resname == "GLY":
        atoms["CA"] = ("C", 2, SP3)
    if resname == "PRO":
        atoms["N"] = ("N", 0, SP2)
    return atoms, _BACKBONE_BONDS + side_bonds


def target_atom_name(resname: str, name: str) -> str:
    """Atom name with symmetric side-chain partners folded together."""
    return SYMMETRIC_NAMES.get(resname, {}).get(name, name)
