import numpy as np
import pytest
import torch

from bindpose.graph import LIGAND, init_ligand_coords
from bindpose.net import BindPoseNet, NetConfig, UpdateBlock
from bindpose.toy import random_rotation
from oracles import block_reference, rbf

TINY = dict(d_f=8, d_e=4, n_heads=2, n_blocks=2, n_cycles=2, d_r=16)


def tiny_block(seed=0, **kw):
    torch.manual_seed(seed)
    block = UpdateBlock(NetConfig(**{**TINY, **kw})).double()
    with torch.no_grad():
        block.lam.normal_()
        for g in (block.gate_f1, block.gate_f2, block.gate_e1, block.gate_e2):
            g.norm.weight.normal_()
            g.norm.bias.normal_()
    return block


def block_inputs(n, cfg, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, cfg.d_f)), rng.normal(size=(n, n, cfg.d_e)), rng.normal(size=(n, 3))


def run_block(block, f, e, x, movable):
    t = lambda a: torch.as_tensor(a, dtype=torch.float64)  # noqa: E731
    with torch.no_grad():
        return block(t(f), t(e), t(x), torch.as_tensor(movable))


@pytest.mark.parametrize("seed", range(3))
def test_block_matches_straight_line_oracle(seed):
    block = tiny_block(seed)
    n = 5
    f, e, x = block_inputs(n, block.cfg, seed)
    movable = np.array([True, True, False, True, False])
    f_out, e_out, x_out, att = run_block(block, f, e, x, movable)
    a, omega, f_ref, e_ref, x_ref = block_reference(block, f, e, x, movable)
    np.testing.assert_allclose(att.a.numpy(), a, atol=1e-10, rtol=0)
    np.testing.assert_allclose(att.omega.numpy(), omega, atol=1e-10, rtol=0)
    np.testing.assert_allclose(att.omega.sum(1).numpy(), 1.0, atol=1e-12)
    np.testing.assert_allclose(f_out.numpy(), f_ref, atol=1e-10, rtol=0)
    np.testing.assert_allclose(e_out.numpy(), e_ref, atol=1e-10, rtol=0)
    np.testing.assert_allclose(x_out.numpy(), x_ref, atol=1e-10, rtol=0)
    np.testing.assert_array_equal(x_out.numpy()[~movable], x[~movable])


def test_encode_distance_formula():
    block = tiny_block()
    x = torch.tensor([[0.0, 0, 0], [0.3, 0.4, 0], [0.0, 0, 0]], dtype=torch.float64)
    e = torch.zeros(3, 3, 4, dtype=torch.float64)
    d = block.encode_distance(x, e).numpy()
    np.testing.assert_allclose(d[0, 1, :16], rbf(np.array(np.sqrt(0.25 + 1e-8))), atol=1e-12)
    # coincident points: first basis maximal
    assert d[0, 2, :16].argmax() == 0


def test_single_node_and_symmetric_neighbours():
    block = tiny_block()
    f, e, x = block_inputs(1, block.cfg)
    att = run_block(block, f, e, x, np.array([True]))[3]
    np.testing.assert_array_equal(att.omega.numpy(), np.ones((1, 1, 2)))
    # node 0 with two identical neighbours at identical distances
    f, e, _ = block_inputs(3, block.cfg)
    f[2] = f[1]
    e[0, 2] = e[0, 1]
    x = np.array([[0.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0]])
    omega = run_block(block, f, e, x, np.ones(3, bool))[3].omega.numpy()
    np.testing.assert_allclose(omega[0, 1], omega[0, 2], atol=1e-14)


def test_gate_limits():
    block = tiny_block()
    g = block.gate_f1
    rng = np.random.default_rng(0)
    new, old = (torch.as_tensor(rng.normal(size=(4, 8))) for _ in range(2))
    with torch.no_grad():
        g.proj.weight.zero_()
        g.proj.bias.fill_(-1e4)
        np.testing.assert_allclose(g(new, old).numpy(), g.norm(old).numpy(), atol=1e-12)
        g.proj.bias.fill_(1e4)
        np.testing.assert_allclose(g(new, old).numpy(), g.norm(new + old).numpy(), atol=1e-12)


def test_zero_coordinate_weights_freeze_pose():
    block = tiny_block()
    with torch.no_grad():
        block.w_x.weight.zero_()
        block.w_x.bias.zero_()
    f, e, x = block_inputs(4, block.cfg)
    x_out = run_block(block, f, e, x, np.ones(4, bool))[2]
    np.testing.assert_array_equal(x_out.numpy(), x)


def test_block_rigid_equivariance():
    block = tiny_block(1)
    f, e, x = block_inputs(6, block.cfg, 1)
    rng = np.random.default_rng(3)
    rot, t = random_rotation(rng), rng.normal(size=3)
    mov = np.ones(6, bool)
    f1, e1, x1, _ = run_block(block, f, e, x, mov)
    f2, e2, x2, _ = run_block(block, f, e, x @ rot.T + t, mov)
    np.testing.assert_allclose(x2.numpy(), x1.numpy() @ rot.T + t, atol=1e-12)
    np.testing.assert_allclose(f2.numpy(), f1.numpy(), atol=1e-12)
    np.testing.assert_allclose(e2.numpy(), e1.numpy(), atol=1e-12)


def test_block_permutation_equivariance():
    block = tiny_block(2)
    n = 6
    f, e, x = block_inputs(n, block.cfg, 2)
    mov = np.array([True, False, True, True, False, False])
    p = np.random.default_rng(0).permutation(n)
    f1, e1, x1, _ = run_block(block, f, e, x, mov)
    f2, e2, x2, _ = run_block(block, f[p], e[np.ix_(p, p)], x[p], mov[p])
    np.testing.assert_allclose(f2.numpy(), f1.numpy()[p], atol=1e-12)
    np.testing.assert_allclose(e2.numpy(), e1.numpy()[np.ix_(p, p)], atol=1e-12)
    np.testing.assert_allclose(x2.numpy(), x1.numpy()[p], atol=1e-12)


def tiny_net(seed=0, **kw):
    torch.manual_seed(seed)
    return BindPoseNet(NetConfig(**{**TINY, **kw})).double()


def test_ligand_only_motion_and_update_count(small):
    _, g = small
    model = tiny_net(n_blocks=6, n_cycles=4)
    start = init_ligand_coords(g, 0)
    with torch.no_grad():
        traces = model.run(start, np.random.default_rng(0))
    assert sum(len(t.coords) for t in traces) == 24
    for t in traces:
        lig = torch.as_tensor(t.ligand)
        for x in t.coords:
            np.testing.assert_array_equal(x[~lig].numpy(), start.coords[t.index][~t.ligand])
            assert not torch.allclose(x[lig], torch.as_tensor(start.coords[t.index][t.ligand]))


def test_movable_protein_nodes(small):
    _, g = small
    model = tiny_net()
    movable = g.roles == LIGAND
    k = int(np.flatnonzero(~movable)[0])
    movable[k] = True
    with torch.no_grad():
        t = model.run(g, np.random.default_rng(0), movable=movable)[-1]
    row = int(np.flatnonzero(t.index == k)[0])
    assert not np.allclose(t.coords[-1][row].numpy(), g.coords[k])


def test_recycling_carries_coordinates(small):
    _, g = small
    model = tiny_net()
    start = init_ligand_coords(g, 1)
    with torch.no_grad():
        first, second = model.run(start, np.random.default_rng(0))
    lig = first.ligand
    np.testing.assert_array_equal(first.index, second.index)  # small graph, no sampling
    x_end = first.coords[-1][lig]
    x_start2 = second.coords[0][lig]
    # the first block of cycle two moved from where cycle one ended, not from the init
    assert not torch.allclose(x_start2, x_end)
    one = tiny_net()
    with torch.no_grad():
        alone, = one.run(start, np.random.default_rng(0), n_cycles=1)
    np.testing.assert_allclose(alone.coords[-1].numpy(), first.coords[-1].numpy(), atol=0)


def test_grad_cycle_bounds(small):
    _, g = small
    model = tiny_net()
    with pytest.raises(ValueError):
        model.run(g, np.random.default_rng(0), grad_cycle=3)
    traces = model.run(g, np.random.default_rng(0), grad_cycle=2)
    assert len(traces) == 2
    assert not traces[0].coords[-1].requires_grad
    assert traces[1].coords[-1].requires_grad


def test_carry_mismatch(small):
    _, g = small
    model = tiny_net()
    sub = g.subset(np.arange(len(g)))
    carry = model.blank_carry(g.subset(np.arange(3)))
    with pytest.raises(ValueError, match="carry"):
        model.forward_cycle(sub, carry)


def test_config_validation():
    with pytest.raises(ValueError):
        NetConfig(d_f=10, n_heads=4)
    with pytest.raises(ValueError):
        NetConfig(n_blocks=0)
    cfg = NetConfig()
    assert (cfg.d_f, cfg.d_e, cfg.n_heads, cfg.n_blocks, cfg.n_cycles, cfg.n_ens) == (160, 80, 4, 6, 3, 10)
    assert cfg.d_h * cfg.n_heads == cfg.d_f
    assert cfg.d_f + cfg.d_e == 240
