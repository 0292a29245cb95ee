import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from bindpose.loss import (
    LossWeights, MaskPlan, affinity_loss, coord_loss, dpr_loss, focal_loss, mcm_loss, screening_loss,
    self_loss, supervised_loss, sym_loss,
)
from bindpose.symmetry import EquivalentIndexSet, enumerate_equivalent_indexes
from oracles import brute_force_automorphisms, brute_force_sym_min, central_difference, phenol, random_mol, rel_error


def test_coord_loss_examples():
    x = np.random.default_rng(0).normal(size=(6, 3))
    assert float(coord_loss(x, x)) == 0.0
    assert float(coord_loss(x + [0, 0, 3], x)) == pytest.approx(3.0, abs=1e-12)
    y = np.random.default_rng(1).normal(size=(6, 3))
    direct = sum(math.sqrt(sum((x[i, c] - y[i, c]) ** 2 for c in range(3))) for i in range(6)) / 6
    assert float(coord_loss(x, y)) == pytest.approx(direct, abs=1e-12)


def test_phenol_flip_zero():
    mol = phenol()
    eq = enumerate_equivalent_indexes(mol)
    native = np.random.default_rng(0).normal(size=(7, 3))
    flip = eq.perms[1]
    pred = native[flip]
    value, perm = sym_loss(pred, native, eq)
    assert float(value) == 0.0 and list(perm) == list(flip)
    assert float(coord_loss(pred, native)) > 0


@given(st.integers(0, 100_000))
def test_sym_loss_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    mol = random_mol(rng)
    eq = enumerate_equivalent_indexes(mol)
    native = rng.normal(size=(len(mol), 3))
    pred = native + rng.normal(scale=0.5, size=native.shape)
    value = float(sym_loss(pred, native, eq)[0])
    assert value == pytest.approx(brute_force_sym_min(pred, native, brute_force_automorphisms(mol), "mean"), abs=1e-10)
    # never above identity; invariant under relabeling by a member of the set
    assert value <= float(coord_loss(pred, native)) + 1e-15
    p = eq.perms[int(rng.integers(len(eq)))]
    assert float(sym_loss(pred[p], native, eq)[0]) == pytest.approx(value, abs=1e-12)


def test_asymmetric_equals_identity():
    rng = np.random.default_rng(4)
    pred, native = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    eq = EquivalentIndexSet.identity(3)
    assert float(sym_loss(pred, native, eq)[0]) == float(coord_loss(pred, native))


def test_affinity_loss_examples():
    assert float(affinity_loss(5.0, 7.0)) == 4.0
    assert float(affinity_loss(2.5, 2.5)) == 0.0


def test_supervised_arithmetic():
    native = np.zeros((4, 3))
    eq = EquivalentIndexSet.identity(4)
    c = 0.3
    blocks = [torch.as_tensor(native + [0, 0, c]) for _ in range(6)]
    blocks[0] = torch.as_tensor(native + [0, 0, 100.0])  # block 1 never counts
    a = (5.0 - 7.0) ** 2
    assert float(supervised_loss(blocks, native, eq, 5.0, 7.0)) == pytest.approx(2 * c + a, abs=1e-12)
    w = LossWeights(0.0, 1.0, 1.0)
    assert float(supervised_loss(blocks, native, eq, 5.0, 7.0, w)) == pytest.approx(a, abs=1e-12)
    exact = [torch.as_tensor(native) for _ in range(6)]
    assert float(supervised_loss(exact, native, eq, 5.0, 7.0, LossWeights(1.0, 0.5, 1.0))) == pytest.approx(0.5 * a)


@given(st.integers(0, 10_000))
def test_supervised_matches_formula(seed):
    rng = np.random.default_rng(seed)
    mol = random_mol(rng)
    eq = enumerate_equivalent_indexes(mol)
    n = len(mol)
    native = rng.normal(size=(n, 3))
    blocks = [native + rng.normal(size=(n, 3)) for _ in range(6)]
    g1, g2 = rng.random(2) * 2
    y, t = rng.random(2)
    perms = brute_force_automorphisms(mol)
    per = [brute_force_sym_min(b, native, perms, "mean") for b in blocks]
    expect = g1 * (sum(per[1:5]) / 4 + per[5]) + g2 * (y - t) ** 2
    got = float(supervised_loss([torch.as_tensor(b) for b in blocks], native, eq, y, t, LossWeights(g1, g2, 1.0)))
    assert got == pytest.approx(expect, abs=1e-10)


def test_supervised_two_blocks():
    native = np.zeros((2, 3))
    blocks = [torch.as_tensor(native + 1.0), torch.as_tensor(native + [0, 0, 2.0])]
    assert float(supervised_loss(blocks, native, EquivalentIndexSet.identity(2))) == pytest.approx(2.0)


def test_sym_loss_gradient():
    rng = np.random.default_rng(9)
    mol = phenol()
    eq = enumerate_equivalent_indexes(mol)
    native = rng.normal(size=(7, 3))
    x0 = native[eq.perms[1]] + rng.normal(scale=0.1, size=(7, 3))
    x = torch.as_tensor(x0).requires_grad_(True)
    sym_loss(x, native, eq)[0].backward()
    num = central_difference(lambda v: float(sym_loss(torch.as_tensor(v), native, eq)[0]), x0)
    assert rel_error(x.grad.numpy(), num) < 1e-6


def test_focal_examples():
    assert float(focal_loss(torch.zeros(1, 2, dtype=torch.float64), [0])) == pytest.approx(0.25 * math.log(2), abs=1e-12)
    logits = torch.as_tensor(np.random.default_rng(0).normal(size=(5, 4)))
    target = np.array([0, 3, 1, 1, 2])
    ce = torch.nn.functional.cross_entropy(logits, torch.as_tensor(target))
    assert float(focal_loss(logits, target, gamma=0.0)) == pytest.approx(float(ce), abs=1e-12)
    assert float(focal_loss(logits[:0], target[:0])) == 0.0
    confident = torch.tensor([[50.0, 0.0, 0.0]], dtype=torch.float64)
    assert float(focal_loss(confident, [0])) < 1e-20


@given(st.integers(0, 10_000))
def test_focal_matches_formula(seed):
    rng = np.random.default_rng(seed)
    logits = rng.normal(scale=3, size=(4, 5))
    target = rng.integers(0, 5, 4)
    terms = []
    for row, t in zip(logits, target):
        p = np.exp(row - row.max())
        p = p / p.sum()
        terms.append(-(1 - p[t]) ** 2 * math.log(p[t]))
    assert float(focal_loss(torch.as_tensor(logits), target)) == pytest.approx(np.mean(terms), abs=1e-12)


class FakeHeads:
    """Mask heads that return the leading feature columns as logits."""

    def atom_name(self, f):
        return f[:, :4]

    def residue(self, f):
        return f[:, 4:7]

    def element(self, f):
        return f[:, :3]

    def bond(self, e):
        return e[:, :5]


def test_mcm_term_by_term():
    rng = np.random.default_rng(0)
    n = 6
    feats = torch.as_tensor(rng.normal(size=(n, 8)))
    edges = torch.as_tensor(rng.normal(size=(n, n, 5)))
    index = np.array([10, 11, 12, 13, 14, 15])
    plan = MaskPlan(
        protein_nodes=np.array([13, 14, 99]), ligand_nodes=np.array([10]),
        edges=np.array([[10, 11], [11, 10], [13, 14], [14, 13]]),
        atom_name=np.array([1, 3, 0]), residue=np.array([2, 0, 1]), element=np.array([2]),
        bond=np.array([4, 4, 1, 1]),
    )
    total, terms = mcm_loss(feats, edges, index, plan, FakeHeads())
    f, e = feats, edges
    expect = {
        "p_atom_type": focal_loss(f[[3, 4], :4], [1, 3]),  # node 99 is outside the sub-graph
        "p_res_type": focal_loss(f[[3, 4], 4:7], [2, 0]),
        "l_elem_type": focal_loss(f[[0], :3], [2]),
        "bond_type": focal_loss(e[[0, 1, 3, 4], [1, 0, 4, 3], :5], [4, 4, 1, 1]),
    }
    for k, v in expect.items():
        assert float(terms[k]) == pytest.approx(float(v), abs=1e-12)
    assert float(total) == pytest.approx(sum(float(v) for v in expect.values()), abs=1e-12)


def test_mcm_empty_protein_term():
    feats = torch.zeros(2, 8, dtype=torch.float64)
    edges = torch.zeros(2, 2, 5, dtype=torch.float64)
    plan = MaskPlan(np.array([], int), np.array([0]), np.zeros((0, 2), int), np.array([], int),
                    np.array([], int), np.array([1]), np.array([], int))
    _, terms = mcm_loss(feats, edges, np.array([0, 1]), plan, FakeHeads())
    assert float(terms["p_atom_type"]) == 0.0 and float(terms["bond_type"]) == 0.0


def test_dpr_examples():
    rng = np.random.default_rng(0)
    orig = rng.normal(size=(5, 3))
    noise = rng.normal(scale=0.2, size=(5, 3))
    assert float(dpr_loss(orig, orig)) == 0.0
    assert float(dpr_loss(orig + noise, orig)) == pytest.approx(np.linalg.norm(noise, axis=1).mean(), abs=1e-12)
    assert float(dpr_loss(np.zeros((0, 3)), np.zeros((0, 3)))) == 0.0


def test_self_and_screening():
    assert self_loss(0.0, 0.0) == 0.0 and self_loss(1.5, 0.0) == 1.5
    assert self_loss(0.25, 0.5) == 0.75
    assert float(screening_loss(0.5, 1)) == pytest.approx(math.log(2))
    assert float(screening_loss(0.9, 0)) == pytest.approx(-math.log(0.1))
    assert math.isfinite(float(screening_loss(1.0, 0)))


def test_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(-1.0, 1.0, 1.0)
