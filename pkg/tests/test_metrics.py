import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bindpose.metrics import (
    Candidate, ScreenPanel, enrichment_factor, interaction_reproducibility, medoid_index, pairwise_rmsd, rmsd,
    screening_success, success_rate, top_count,
)
from bindpose.symmetry import enumerate_equivalent_indexes
from bindpose.toy import random_rotation
from oracles import (
    brute_force_automorphisms, brute_force_sym_min, ef_counting, phenol, random_mol, random_panels,
    reproducibility_counting, screening_success_counting, success_counting,
)


def to_panel(scores, binders, best, ids):
    return ScreenPanel("t", [Candidate(i, float(s), bool(b), bool(x)) for s, b, x, i in zip(scores, binders, best, ids)])


def test_rmsd_examples():
    x = np.random.default_rng(0).normal(size=(5, 3))
    assert rmsd(x, x) == 0.0
    assert rmsd(x, x + [3, 4, 0]) == pytest.approx(5.0, abs=1e-12)
    eq = enumerate_equivalent_indexes(phenol())
    native = np.random.default_rng(1).normal(size=(7, 3))
    flipped = native[eq.perms[1]]
    assert rmsd(flipped, native) > 0
    assert rmsd(flipped, native, eq) == 0.0
    with pytest.raises(ValueError):
        rmsd(x, x[:3])


@given(st.integers(0, 100_000))
def test_rmsd_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    mol = random_mol(rng)
    eq = enumerate_equivalent_indexes(mol)
    a = rng.normal(size=(len(mol), 3))
    b = a + rng.normal(scale=0.7, size=a.shape)
    perms = brute_force_automorphisms(mol)
    assert rmsd(a, b, eq) == pytest.approx(brute_force_sym_min(a, b, perms, "rms"), abs=1e-10)
    assert rmsd(a, b, eq) == pytest.approx(rmsd(b, a, eq), abs=1e-12)
    rot, t = random_rotation(rng), rng.normal(size=3) * 5
    assert rmsd(a @ rot.T + t, b @ rot.T + t, eq) == pytest.approx(rmsd(a, b, eq), abs=1e-9)


def test_medoid_example():
    poses = [np.zeros((2, 3)), np.full((2, 3), 0.1), np.full((2, 3), 0.2), np.full((2, 3), 5.0)]
    d = pairwise_rmsd(poses)
    assert medoid_index(d) == 1
    brute = min(range(4), key=lambda i: sum(rmsd(poses[i], poses[j]) for j in range(4)))
    assert brute == 1


def test_success_rate():
    assert success_rate([1.0, 2.5, 0.5]) == pytest.approx(2 / 3)
    assert success_rate([2.0]) == 0.0
    with pytest.raises(ValueError):
        success_rate([])
    rng = np.random.default_rng(0)
    for _ in range(200):
        r = rng.random(int(rng.integers(1, 40))) * 8
        assert success_rate(r, 4.0) == success_counting(r, 4.0)
        assert success_rate(r) == success_counting(r, 2.0)


def test_top_count():
    assert top_count(0.01, 100) == 1
    assert top_count(0.07, 100) == 7
    assert top_count(0.1, 5) == 1
    assert top_count(0.05, 101) == 6


def test_ef_examples():
    scores = np.arange(100, 0, -1, dtype=float)
    binders = np.zeros(100, bool)
    binders[[0, 2, 4, 6, 8, 50, 60, 70, 80, 90]] = True
    ids = [f"c{k:03d}" for k in range(100)]
    panel = to_panel(scores, binders, binders, ids)
    assert enrichment_factor(panel, 0.1) == pytest.approx(5.0)
    sat = np.zeros(100, bool)
    sat[:1] = True
    assert enrichment_factor(to_panel(scores, sat, sat, ids), 0.01) == pytest.approx(100.0)
    with pytest.raises(ValueError):
        enrichment_factor(ScreenPanel("t", []), 0.1)
    with pytest.raises(ValueError):
        to_panel(scores, np.zeros(100, bool), np.zeros(100, bool), ids)


def test_screening_success_examples():
    ids = [f"c{k:03d}" for k in range(100)]
    scores = np.arange(100, 0, -1, dtype=float)
    first = np.zeros(100, bool)
    first[0] = True
    second = np.zeros(100, bool)
    second[1] = True
    assert screening_success([to_panel(scores, first, first, ids)], 0.01) == 1.0
    assert screening_success([to_panel(scores, second, second, ids)], 0.01) == 0.0
    with pytest.raises(ValueError):
        screening_success([], 0.1)


@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1])
def test_panels_vs_counting_oracle(alpha):
    raw = random_panels(np.random.default_rng(int(alpha * 100)), 200)
    panels = [to_panel(*p) for p in raw]
    for p, (s, b, _, i) in zip(panels, raw):
        assert enrichment_factor(p, alpha) == ef_counting(list(s), list(b), i, alpha)
    oracle = screening_success_counting([(list(s), list(x), i) for s, _, x, i in raw], alpha)
    assert screening_success(panels, alpha) == oracle


def test_monotone_invariance():
    rng = np.random.default_rng(5)
    for s, b, x, i in random_panels(rng, 50):
        p1 = to_panel(s, b, x, i)
        p2 = to_panel(np.exp(0.3 * s) * 7 - 2, b, x, i)
        for alpha in (0.01, 0.05, 0.1):
            assert enrichment_factor(p1, alpha) == enrichment_factor(p2, alpha)
            assert screening_success([p1], alpha) == screening_success([p2], alpha)


def test_reproducibility_examples_and_oracle():
    assert interaction_reproducibility([], []) == 0.5
    assert interaction_reproducibility(["a", "b", "c"], ["a", "b", "c", "d"]) == pytest.approx(4 / 6)
    k = 5
    same = [f"x{j}" for j in range(k)]
    assert interaction_reproducibility(same, same) == (1 + k) / (2 + k)
    rng = np.random.default_rng(0)
    for _ in range(300):
        pred = [str(v) for v in rng.integers(0, 10, rng.integers(0, 8))]
        native = [str(v) for v in rng.integers(0, 10, rng.integers(0, 8))]
        assert interaction_reproducibility(pred, native) == reproducibility_counting(pred, native)
