import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bindpose.symmetry import EquivalentIndexSet, enumerate_equivalent_indexes
from oracles import brute_force_automorphisms, make_mol, phenol, random_mol


def test_phenol_two_indexes():
    eq = enumerate_equivalent_indexes(phenol())
    assert len(eq) == 2 and not eq.truncated
    np.testing.assert_array_equal(eq.perms[0], np.arange(7))


def test_chain_identity_only():
    mol = make_mol(["C", "N", "O"], [(0, 1, "single"), (1, 2, "single")])
    eq = enumerate_equivalent_indexes(mol)
    np.testing.assert_array_equal(eq.perms, [[0, 1, 2]])


def test_benzene_dihedral():
    ring = [(k, (k + 1) % 6, "aromatic") for k in range(6)]
    mol = make_mol(["C"] * 6, ring, aromatic=range(6))
    eq = enumerate_equivalent_indexes(mol)
    assert len(eq) == 12
    np.testing.assert_array_equal(eq.perms, brute_force_automorphisms(mol))


@given(st.integers(0, 100_000))
def test_matches_brute_force(seed):
    mol = random_mol(np.random.default_rng(seed))
    eq = enumerate_equivalent_indexes(mol)
    np.testing.assert_array_equal(eq.perms, brute_force_automorphisms(mol))


@given(st.integers(0, 100_000))
def test_group_and_bond_preservation(seed):
    mol = random_mol(np.random.default_rng(seed))
    eq = enumerate_equivalent_indexes(mol)
    perms = {tuple(p) for p in eq.perms}
    assert tuple(range(len(mol))) in perms
    for p in eq.perms:
        for q in eq.perms:
            assert tuple(p[q]) in perms
    bonds = {frozenset((b.i, b.j)): b.order for b in mol.bonds}
    for p in eq.perms:
        for b in mol.bonds:
            assert bonds.get(frozenset((int(p[b.i]), int(p[b.j])))) == b.order


def test_charge_breaks_symmetry():
    mol = make_mol(["O", "C", "O"], [(0, 1, "single"), (1, 2, "single")], charges=[-1, 0, 0])
    assert len(enumerate_equivalent_indexes(mol)) == 1
    mol = make_mol(["O", "C", "O"], [(0, 1, "single"), (1, 2, "single")])
    assert len(enumerate_equivalent_indexes(mol)) == 2


def test_cap_and_truncation():
    # neopentane-like star with 4 equivalent leaves: 24 automorphisms
    star = make_mol(["C"] * 5, [(0, k, "single") for k in range(1, 5)])
    full = enumerate_equivalent_indexes(star)
    assert len(full) == 24 and not full.truncated
    exact = enumerate_equivalent_indexes(star, cap=24)
    assert len(exact) == 24 and not exact.truncated
    cut = enumerate_equivalent_indexes(star, cap=5)
    assert len(cut) == 5 and cut.truncated
    np.testing.assert_array_equal(cut.perms, full.perms[:5])
    with pytest.raises(ValueError):
        enumerate_equivalent_indexes(star, cap=0)


def test_default_cap_on_large_symmetry():
    # two tertiary-butyl groups on a chain: 6^2 * 2 * ... grows past small caps quickly
    bonds = [(0, 1, "single")]
    elements = ["C", "C"]
    for hub in (0, 1):
        for _ in range(3):
            elements.append("C")
            bonds.append((hub, len(elements) - 1, "single"))
    mol = make_mol(elements, bonds)
    eq = enumerate_equivalent_indexes(mol)
    assert len(eq) == 72 and not eq.truncated


def test_identity_helper():
    np.testing.assert_array_equal(EquivalentIndexSet.identity(3).perms, [[0, 1, 2]])
