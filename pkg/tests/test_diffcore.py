import io

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from bindpose import diffcore as dc
from oracles import central_difference, rel_error


def numeric_grad_check(fn, *shapes, seed=0, tol=1e-6):
    """Gradient of sum(fn(*inputs) * w) by autograd vs central differences."""
    rng = np.random.default_rng(seed)
    xs = [rng.normal(size=s) for s in shapes]
    out_shape = fn(*[torch.as_tensor(x) for x in xs]).shape
    w = rng.normal(size=out_shape)

    def scalar(*arrs):
        with torch.no_grad():
            return float((fn(*[torch.as_tensor(a) for a in arrs]) * torch.as_tensor(w)).sum())

    ts = [dc.as_tensor(x, requires_grad=True) for x in xs]
    (fn(*ts) * torch.as_tensor(w)).sum().backward()
    for k, x in enumerate(xs):
        def partial(v, k=k):
            args = list(xs)
            args[k] = v
            return scalar(*args)

        num = central_difference(partial, x)
        assert rel_error(ts[k].grad.numpy(), num) < tol, f"input {k}"


PRIMITIVES = [
    ("linear", lambda x, w, b: dc.linear(x, w, b), [(4, 3), (5, 3), (5,)]),
    ("add", dc.add, [(3, 4), (4,)]),
    ("mul", dc.mul, [(3, 4), (3, 4)]),
    ("concat", lambda a, b: dc.concat([a, b], axis=-1), [(3, 2), (3, 4)]),
    ("matmul", dc.matmul, [(3, 4), (4, 2)]),
    ("leaky_relu", dc.leaky_relu, [(5, 4)]),
    ("relu", dc.relu, [(5, 4)]),
    ("sigmoid", dc.sigmoid, [(5, 4)]),
    ("softmax", lambda x: dc.softmax(x, axis=1), [(3, 5)]),
    ("layer_norm", dc.layer_norm, [(3, 6)]),
    ("mean", lambda x: dc.mean(x, axis=0), [(4, 3)]),
    ("sum", lambda x: dc.sum(x, axis=1), [(4, 3)]),
    ("l2_norm", dc.l2_norm, [(6, 3)]),
    ("rbf_encode", lambda d: dc.rbf_encode(d.abs()), [(5,)]),
]


@pytest.mark.parametrize("name,fn,shapes", PRIMITIVES, ids=[p[0] for p in PRIMITIVES])
def test_primitive_gradients(name, fn, shapes):
    for seed in range(3):
        numeric_grad_check(fn, *shapes, seed=seed)


def test_l2_norm_finite_at_zero():
    x = dc.as_tensor(np.zeros(3), requires_grad=True)
    y = dc.l2_norm(x)
    y.backward()
    assert y.item() == pytest.approx(1e-4)
    assert torch.isfinite(x.grad).all()


def test_softmax_examples():
    out = dc.softmax(torch.tensor([0.0, 0.0], dtype=torch.float64))
    np.testing.assert_allclose(out.numpy(), [0.5, 0.5], atol=1e-15)
    big = dc.softmax(torch.tensor([1000.0, 0.0], dtype=torch.float64))
    np.testing.assert_allclose(big.numpy(), [1.0, 0.0], atol=1e-15)
    with pytest.raises(dc.ShapeError):
        dc.softmax(torch.zeros(0, dtype=torch.float64))


def test_leaky_examples():
    out = dc.leaky_relu(torch.tensor([-1.0, 2.0], dtype=torch.float64))
    np.testing.assert_array_equal(out.numpy(), [-0.01, 2.0])


@given(st.integers(0, 10_000))
def test_layer_norm_statistics(seed):
    x = np.random.default_rng(seed).normal(scale=5, size=(4, 9))
    y = dc.layer_norm(torch.as_tensor(x)).numpy()
    np.testing.assert_allclose(y.mean(-1), 0, atol=1e-12)
    var = x.var(-1)
    np.testing.assert_allclose(y.var(-1), var / (var + dc.LAYER_NORM_EPS), rtol=1e-12)


def test_rbf_layout():
    r = dc.rbf_encode(torch.tensor([0.0, 2.0], dtype=torch.float64)).numpy()
    assert r.shape == (2, 16)
    assert r[0, 0] == 1.0 and r[0].argmax() == 0
    assert r[1, -1] == 1.0 and r[1].argmax() == 15
    centers = np.linspace(0, 2, 16)
    d = 0.731
    expect = np.exp(-((d - centers) ** 2) / (2 * (2 / 15) ** 2))
    np.testing.assert_allclose(dc.rbf_encode(torch.tensor(d, dtype=torch.float64)).numpy(), expect, atol=1e-12)


@pytest.mark.parametrize("call", [
    lambda: dc.linear(torch.zeros(2, 3), torch.zeros(4, 5)),
    lambda: dc.add(torch.zeros(2, 3), torch.zeros(4)),
    lambda: dc.mul(torch.zeros(2, 3), torch.zeros(3, 2)),
    lambda: dc.concat([torch.zeros(2, 3), torch.zeros(3, 3)], axis=-1),
    lambda: dc.concat([]),
    lambda: dc.matmul(torch.zeros(2, 3), torch.zeros(2, 3)),
    lambda: dc.layer_norm(torch.zeros(2, 0)),
])
def test_shape_errors(call):
    with pytest.raises(dc.ShapeError):
        call()


def test_checkpoint_round_trip():
    tensors = {
        "w": torch.randn(3, 4, dtype=torch.float32),
        "d": torch.randn(2, dtype=torch.float64),
        "i": torch.arange(5, dtype=torch.int64),
        "s": torch.tensor(1.5, dtype=torch.float32),
    }
    buf = io.BytesIO()
    dc.write_checkpoint(buf, tensors, {"step": 3})
    buf.seek(0)
    back, meta = dc.read_checkpoint(buf)
    assert meta == {"step": 3}
    assert list(back) == list(tensors)
    for k, t in tensors.items():
        assert back[k].dtype == t.dtype and back[k].shape == t.shape
        assert torch.equal(back[k], t)


def test_checkpoint_rejects_bad_header():
    buf = io.BytesIO()
    dc.write_checkpoint(buf, {"w": torch.zeros(2)})
    raw = buf.getvalue()
    with pytest.raises(ValueError, match="not a bindpose"):
        dc.read_checkpoint(io.BytesIO(b"ABCD" + raw[4:]))
    with pytest.raises(ValueError, match="truncated"):
        dc.read_checkpoint(io.BytesIO(raw[:5]))
    bumped = raw[:4] + (99).to_bytes(2, "little") + raw[6:]
    with pytest.raises(ValueError, match="version"):
        dc.read_checkpoint(io.BytesIO(bumped))
