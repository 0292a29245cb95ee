"""Differentiable primitives and the parameter checkpoint format.

Tensors and the gradient tape are torch's; this module pins down the exact
operator semantics the network relies on (RBF layout, epsilon-guarded norms,
LeakyReLU slope) and validates shapes with uniform error messages.
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO, Mapping

import numpy as np
import torch

Tensor = torch.Tensor

LEAKY_SLOPE = 0.01
NORM_EPS = 1e-8
LAYER_NORM_EPS = 1e-5
RBF_COUNT = 16
RBF_MAX = 2.0  # scaled units, 20 A unscaled


class ShapeError(ValueError):
    pass


def as_tensor(x, dtype: torch.dtype = torch.float64, requires_grad: bool = False) -> Tensor:
    t = torch.as_tensor(np.asarray(x) if not isinstance(x, Tensor) else x, dtype=dtype)
    if requires_grad:
        t = t.clone().requires_grad_(True)
    return t


def _check_axis(x: Tensor, axis: int, op: str) -> None:
    if x.dim() == 0:
        raise ShapeError(f"{op} needs at least one dimension")
    if x.shape[axis] < 1:
        raise ShapeError(f"{op} over empty axis {axis}")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with weight shaped ``[out, in]``."""
    if x.shape[-1] != weight.shape[-1]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight width {weight.shape[-1]}")
    return torch.nn.functional.linear(x, weight, bias)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError as exc:
        raise ShapeError(f"add: {tuple(a.shape)} vs {tuple(b.shape)}") from exc
    return a + b


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError as exc:
        raise ShapeError(f"mul: {tuple(a.shape)} vs {tuple(b.shape)}") from exc
    return a * b


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat of nothing")
    ref = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(ref):
            raise ShapeError("concat: rank mismatch")
        a = axis % len(ref)
        if other[:a] + other[a + 1:] != ref[:a] + ref[a + 1:]:
            raise ShapeError(f"concat: {tuple(t.shape)} incompatible with {tuple(ref)}")
    return torch.cat(tensors, dim=axis)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[-1] != b.shape[-2 if b.dim() > 1 else 0]:
        raise ShapeError(f"matmul: {tuple(a.shape)} @ {tuple(b.shape)}")
    return a @ b


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    return torch.nn.functional.leaky_relu(x, negative_slope=slope)


def relu(x: Tensor) -> Tensor:
    return torch.relu(x)


def sigmoid(x: Tensor) -> Tensor:
    return torch.sigmoid(x)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    _check_axis(x, axis, "softmax")
    return torch.softmax(x, dim=axis)


def layer_norm(x: Tensor, axis: int = -1, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Zero mean, unit (biased) variance along ``axis``; no affine part."""
    _check_axis(x, axis, "layer_norm")
    mu = x.mean(dim=axis, keepdim=True)
    var = ((x - mu) ** 2).mean(dim=axis, keepdim=True)
    return (x - mu) / torch.sqrt(var + eps)


def mean(x: Tensor, axis=None) -> Tensor:
    return x.mean() if axis is None else x.mean(dim=axis)


def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors the operator name
    return x.sum() if axis is None else x.sum(dim=axis)


def l2_norm(x: Tensor, axis: int = -1, eps: float = NORM_EPS) -> Tensor:
    """``sqrt(sum(x^2) + eps)``; finite gradient at zero."""
    return torch.sqrt((x * x).sum(dim=axis) + eps)


def rbf_centers(count: int = RBF_COUNT, high: float = RBF_MAX, dtype=torch.float64) -> Tensor:
    return torch.linspace(0.0, high, count, dtype=dtype)


def rbf_encode(d: Tensor, count: int = RBF_COUNT, high: float = RBF_MAX) -> Tensor:
    """Gaussian basis expansion ``exp(-(d - mu_k)^2 / (2 s^2))``, s = center spacing."""
    centers = rbf_centers(count, high, dtype=d.dtype)
    width = high / (count - 1)
    return torch.exp(-((d.unsqueeze(-1) - centers) ** 2) / (2.0 * width * width))


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_MAGIC = b"BPCK"
CHECKPOINT_VERSION = 1


_DTYPES = {"f": "<f4", "d": "<f8", "q": "<i8"}
_TORCH_CODES = {torch.float32: "f", torch.float64: "d", torch.int64: "q"}


def write_checkpoint(fh: BinaryIO, tensors: Mapping[str, Tensor], meta: dict | None = None) -> None:
    """Header ``{magic, version, meta-length, count}``, JSON meta, then named tensors.

    Each tensor record is ``{name, dtype code, ndim, shape, little-endian data}``;
    float32, float64 and int64 are stored exactly, anything else as float32.
    """
    blob = json.dumps(meta or {}, sort_keys=True).encode()
    fh.write(struct.pack("<4sHII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(blob), len(tensors)))
    fh.write(blob)
    for name, t in tensors.items():
        t = torch.as_tensor(t).detach().cpu()
        code = _TORCH_CODES.get(t.dtype, "f")
        raw = name.encode()
        arr = np.asarray(t.numpy(), dtype=_DTYPES[code], order="C")
        fh.write(struct.pack("<HcB", len(raw), code.encode(), arr.ndim))
        fh.write(raw)
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_checkpoint(fh: BinaryIO) -> tuple[dict[str, Tensor], dict]:
    head = fh.read(struct.calcsize("<4sHII"))
    if len(head) != struct.calcsize("<4sHII"):
        raise ValueError("truncated checkpoint")
    magic, version, meta_len, count = struct.unpack("<4sHII", head)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError("not a bindpose checkpoint")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    meta = json.loads(fh.read(meta_len).decode())
    tensors = {}
    for _ in range(count):
        name_len, code, ndim = struct.unpack("<HcB", fh.read(4))
        name = fh.read(name_len).decode()
        shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        dtype = np.dtype(_DTYPES[code.decode()])
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(fh.read(dtype.itemsize * size), dtype=dtype).reshape(shape)
        tensors[name] = torch.from_numpy(arr.astype(dtype.newbyteorder("=")))
    return tensors, meta
