"""Graph transformer with equivariant coordinate updates and recycling."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch
from torch import nn

from bindpose import diffcore as dc
from bindpose.graph import (
    EDGE_DIM, LIGAND, LIGAND_DIM, PROTEIN_CONTEXT, PROTEIN_DIM, SCALE, ComplexGraph, SubGraph,
    init_ligand_coords, sample_subgraph,
)


@dataclass
class NetConfig:
    d_f: int = 160
    d_e: int = 80
    n_heads: int = 4
    n_blocks: int = 6
    n_cycles: int = 3
    n_ens: int = 10
    d_r: int = dc.RBF_COUNT
    leaky_slope: float = dc.LEAKY_SLOPE
    max_nodes: int = 200
    init_sigma: float = 10.0  # Angstrom
    coord_scale: float = 0.05  # initial value of every lambda_h

    def __post_init__(self) -> None:
        for f in fields(self):
            if f.name == "coord_scale":
                continue
            if getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be positive")
        if self.d_f % self.n_heads:
            raise ValueError("d_f must be divisible by n_heads")

    @property
    def d_h(self) -> int:
        return self.d_f // self.n_heads

    @classmethod
    def light(cls, **overrides) -> "NetConfig":
        return cls(**overrides)

    @classmethod
    def full(cls, **overrides) -> "NetConfig":
        base = dict(d_f=768, d_e=384, n_heads=8, n_cycles=4)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)


class Gate(nn.Module):
    """``Norm(sigmoid(W [new, old, new - old]) * new + old)``."""

    def __init__(self, dim: int):
        super().__init__()
        self.proj = nn.Linear(3 * dim, dim)
        self.norm = nn.LayerNorm(dim)

    def forward(self, new: torch.Tensor, old: torch.Tensor) -> torch.Tensor:
        g = dc.sigmoid(self.proj(dc.concat([new, old, new - old], axis=-1)))
        return self.norm(g * new + old)


class FeedForward(nn.Module):
    def __init__(self, dim: int, slope: float):
        super().__init__()
        self.fc1 = nn.Linear(dim, dim)
        self.fc2 = nn.Linear(dim, dim)
        self.slope = slope

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(dc.leaky_relu(self.fc1(x), self.slope))


@dataclass
class Attention:
    a: torch.Tensor  # [N, N, H, d_h] per-pair query-key products
    omega: torch.Tensor  # [N, N, H] softmax over neighbours j
    v: torch.Tensor  # [N, H, d_h]


class UpdateBlock(nn.Module):
    """One feature-update block followed by its coordinate-update block."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        d_f, d_e, d_in = cfg.d_f, cfg.d_e, cfg.d_e + cfg.d_r
        self.w_q = nn.Linear(d_f, d_f)
        self.w_k = nn.Linear(d_f, d_f)
        self.w_v = nn.Linear(d_f, d_f)
        self.w_e = nn.Linear(d_in, d_f)
        self.w_t = nn.Linear(d_in, d_f)
        self.w_fo = nn.Linear(2 * d_f, d_f)
        self.w_eo = nn.Linear(d_f, d_e)
        self.gate_f1 = Gate(d_f)
        self.gate_f2 = Gate(d_f)
        self.ff_f = FeedForward(d_f, cfg.leaky_slope)
        self.gate_e1 = Gate(d_e)
        self.gate_e2 = Gate(d_e)
        self.ff_e = FeedForward(d_e, cfg.leaky_slope)
        self.w_x = nn.Linear(cfg.d_h, 1)
        self.lam = nn.Parameter(torch.full((cfg.n_heads,), float(cfg.coord_scale)))

    def encode_distance(self, x: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
        """``[N, N, d_r + d_e]``: RBF of current pair distances, then edge features."""
        dist = dc.l2_norm(x[:, None, :] - x[None, :, :])
        return dc.concat([dc.rbf_encode(dist, self.cfg.d_r), e], axis=-1)

    def attention(self, f: torch.Tensor, d: torch.Tensor) -> Attention:
        n, heads, d_h = f.shape[0], self.cfg.n_heads, self.cfg.d_h
        q = self.w_q(f).view(n, heads, d_h)
        k = self.w_k(f).view(1, n, heads, d_h) * dc.leaky_relu(self.w_e(d), self.cfg.leaky_slope).view(n, n, heads, d_h)
        v = self.w_v(f).view(n, heads, d_h)
        a = q[:, None] * k
        omega = dc.softmax(a.sum(-1) / math.sqrt(d_h), axis=1)
        return Attention(a, omega, v)

    def aggregate(self, f: torch.Tensor, e: torch.Tensor, d: torch.Tensor, att: Attention):
        """Message aggregation, gating and feed-forward for nodes and edges."""
        n, heads, d_h = f.shape[0], self.cfg.n_heads, self.cfg.d_h
        w = att.omega
        v_i = att.v * w.sum(1)[..., None]
        v_j = torch.einsum("ijh,jhd->ihd", w, att.v)
        f_hat = self.w_fo(dc.concat([v_i, v_j], axis=-1).reshape(n, 2 * self.cfg.d_f))
        t = dc.leaky_relu(self.w_t(d), self.cfg.leaky_slope).view(n, n, heads, d_h)
        e_hat = self.w_eo((w[..., None] * t).reshape(n, n, self.cfg.d_f))
        f1 = self.gate_f1(f_hat, f)
        f_out = self.gate_f2(self.ff_f(f1), f1)
        e1 = self.gate_e1(e_hat, e)
        e_out = self.gate_e2(self.ff_e(e1), e1)
        return f_out, e_out

    def coord_update(self, x: torch.Tensor, a: torch.Tensor, movable: torch.Tensor) -> torch.Tensor:
        """Move ``movable`` nodes along unit pair directions scaled by ``W_x a``."""
        n = x.shape[0]
        diff = x[:, None, :] - x[None, :, :]
        unit = diff / dc.l2_norm(diff)[..., None]
        strength = self.w_x(a).squeeze(-1)  # [N, N, H]
        off_diag = 1.0 - torch.eye(n, dtype=x.dtype)
        delta = torch.einsum("ijh,ijc->ihc", strength * off_diag[..., None], unit)
        step = (self.lam[None, :, None] * delta).sum(1)
        return x + step * movable[:, None].to(x.dtype)

    def forward(self, f, e, x, movable):
        d = self.encode_distance(x, e)
        att = self.attention(f, d)
        f_out, e_out = self.aggregate(f, e, d, att)
        x_out = self.coord_update(x, att.a, movable)
        return f_out, e_out, x_out, att


@dataclass
class Carry:
    """State handed from one cycle to the next, indexed by parent-graph node."""

    node: torch.Tensor  # [N_parent, d_f]
    edge: torch.Tensor  # [N_parent, N_parent, d_e]
    coords: torch.Tensor  # [N_parent, 3]
    has: torch.Tensor  # bool [N_parent], nodes with carried features

    def detach(self) -> "Carry":
        return Carry(self.node.detach(), self.edge.detach(), self.coords.detach(), self.has)


@dataclass
class BlockTrace:
    feats: list[torch.Tensor] = field(default_factory=list)
    edges: list[torch.Tensor] = field(default_factory=list)
    coords: list[torch.Tensor] = field(default_factory=list)
    attention: list[torch.Tensor] = field(default_factory=list)
    index: np.ndarray | None = None  # parent indexes of the sub-graph nodes
    ligand: np.ndarray | None = None  # bool mask over sub-graph nodes


class BindPoseNet(nn.Module):
    def __init__(self, cfg: NetConfig | None = None):
        super().__init__()
        from bindpose.heads import Heads, MaskHeads

        self.cfg = cfg = cfg or NetConfig()
        self.proj_protein = nn.Linear(PROTEIN_DIM, cfg.d_f)
        self.proj_ligand = nn.Linear(LIGAND_DIM, cfg.d_f)
        self.proj_edge = nn.Linear(EDGE_DIM, cfg.d_e)
        self.recycle_node = Gate(cfg.d_f)
        self.recycle_edge = Gate(cfg.d_e)
        self.blocks = nn.ModuleList(UpdateBlock(cfg) for _ in range(cfg.n_blocks))
        self.heads = Heads(cfg.d_f, cfg.d_e, cfg.leaky_slope)
        self.mask_heads = MaskHeads(cfg.d_f, cfg.d_e, cfg.leaky_slope)

    @property
    def dtype(self) -> torch.dtype:
        return self.proj_edge.weight.dtype

    def embed(self, sub: ComplexGraph) -> tuple[torch.Tensor, torch.Tensor]:
        feats = torch.as_tensor(sub.node_feats, dtype=self.dtype)
        lig = torch.as_tensor(sub.roles == LIGAND)
        f = torch.where(
            lig[:, None],
            self.proj_ligand(feats[:, :LIGAND_DIM]),
            self.proj_protein(feats),
        )
        e = self.proj_edge(torch.as_tensor(sub.edge_feats, dtype=self.dtype))
        return f, e

    def blank_carry(self, graph: ComplexGraph) -> Carry:
        """Carry with no features; coordinates taken from ``graph``."""
        if isinstance(graph, SubGraph) and graph.parent_index.size:
            n = int(graph.parent_index.max()) + 1
            coords = torch.zeros(n, 3, dtype=self.dtype)
            coords[torch.as_tensor(graph.parent_index)] = torch.as_tensor(graph.coords, dtype=self.dtype)
        else:
            n = len(graph)
            coords = torch.as_tensor(graph.coords, dtype=self.dtype).clone()
        return Carry(
            node=torch.zeros(n, self.cfg.d_f, dtype=self.dtype),
            edge=torch.zeros(n, n, self.cfg.d_e, dtype=self.dtype),
            coords=coords,
            has=torch.zeros(n, dtype=torch.bool),
        )

    def forward_cycle(self, sub: SubGraph, carry: Carry | None = None,
                      movable: np.ndarray | None = None, keep_attention: bool = False) -> tuple[BlockTrace, Carry]:
        """Run the block stack once on a sub-graph.

        Core-atom features present in ``carry`` are merged into the fresh
        embeddings through the recycle gates and all coordinates start from
        the carried ones. ``movable`` marks sub-graph nodes whose coordinates
        may change (default: ligand nodes).
        """
        if not isinstance(sub, SubGraph):
            sub = sub.subset(np.arange(len(sub)))
        if carry is None:
            carry = self.blank_carry(sub)
        index = torch.as_tensor(sub.parent_index)
        if int(index.max()) >= carry.coords.shape[0]:
            raise ValueError("carry does not match the parent graph")
        f, e = self.embed(sub)
        x = carry.coords[index]
        pos = torch.nonzero(carry.has[index]).squeeze(-1)
        if pos.numel():
            par = index[pos]
            f = f.clone()
            f[pos] = self.recycle_node(f[pos], carry.node[par])
            e = e.clone()
            grid = (pos[:, None], pos[None, :])
            e[grid] = self.recycle_edge(e[grid], carry.edge[par[:, None], par[None, :]])
        if movable is None:
            movable = sub.roles == LIGAND
        mov = torch.as_tensor(np.asarray(movable))
        trace = BlockTrace(index=np.asarray(sub.parent_index), ligand=sub.roles == LIGAND)
        for block in self.blocks:
            f, e, x, att = block(f, e, x, mov)
            trace.feats.append(f)
            trace.edges.append(e)
            trace.coords.append(x)
            if keep_attention:
                trace.attention.append(att.omega)

        cpos = torch.nonzero(torch.as_tensor(sub.roles != PROTEIN_CONTEXT)).squeeze(-1)
        cpar = index[cpos]
        node = carry.node.index_put((cpar,), f[cpos])
        edge = carry.edge.index_put((cpar[:, None], cpar[None, :]), e[cpos[:, None], cpos[None, :]])
        coords = carry.coords.index_put((index,), x)
        has = carry.has.clone()
        has[cpar] = True
        return trace, Carry(node, edge, coords, has)

    def run(self, graph: ComplexGraph, rng: np.random.Generator, n_cycles: int | None = None,
            grad_cycle: int | None = None, movable: np.ndarray | None = None,
            keep_attention: bool = False, max_nodes: int | None = None) -> list[BlockTrace]:
        """Recycle over fresh sub-graph samples of ``graph``.

        ``graph.coords`` must already hold the initial ligand placement.
        With ``grad_cycle`` set, cycles before it run without gradient
        recording and the loop stops after it.
        """
        n_cycles = n_cycles or self.cfg.n_cycles
        max_nodes = max_nodes or self.cfg.max_nodes
        if grad_cycle is not None and not 1 <= grad_cycle <= n_cycles:
            raise ValueError(f"grad_cycle {grad_cycle} outside 1..{n_cycles}")
        last = grad_cycle or n_cycles
        carry = self.blank_carry(graph)
        traces = []
        for c in range(1, last + 1):
            sub = sample_subgraph(graph, max_nodes, rng)
            sub_movable = None if movable is None else np.asarray(movable)[sub.parent_index]
            record = grad_cycle is None or c == grad_cycle
            with torch.set_grad_enabled(record and torch.is_grad_enabled()):
                trace, carry = self.forward_cycle(sub, carry, sub_movable, keep_attention)
            if not record:
                carry = carry.detach()
            traces.append(trace)
        return traces


def predict(model: BindPoseNet, graph: ComplexGraph, seed=0, n_ens: int | None = None,
            eqset=None, sigma: float | None = None, native: np.ndarray | None = None):
    """Ensemble prediction; the reported pose is the RMSD medoid of the members.

    Each member draws a fresh ligand initialization and fresh sub-graphs.
    ``native`` (Angstrom), when given, fills the per-update RMSD trace.
    """
    from bindpose.heads import PredictionRecord, unscale_affinity
    from bindpose.metrics import medoid_index, pairwise_rmsd, rmsd

    n_ens = n_ens or model.cfg.n_ens
    sigma = model.cfg.init_sigma if sigma is None else sigma
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    members, traces, affinities, probabilities = [], [], [], []
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for _ in range(n_ens):
            start = init_ligand_coords(graph, rng, sigma=sigma)
            cycles = model.run(start, rng)
            lig = [np.asarray(t.ligand) for t in cycles]
            steps = [x[m].cpu().numpy() / SCALE for t, m in zip(cycles, lig) for x in t.coords]
            last = cycles[-1]
            y_aff, y_bind = model.heads(last.feats[-1], last.edges[-1])
            members.append(steps[-1])
            traces.append(np.stack(steps))
            affinities.append(unscale_affinity(y_aff))
            probabilities.append(float(y_bind))
    model.train(was_training)
    best = medoid_index(pairwise_rmsd(members, eqset)) if n_ens > 1 else 0
    rmsd_trace = None
    if native is not None:
        rmsd_trace = [rmsd(step, native, eqset) for step in traces[best]]
    return PredictionRecord(
        coords=members[best],
        trace=traces[best],
        affinity=float(np.mean(affinities)),
        probability=float(np.mean(probabilities)),
        members=members,
        medoid=best,
        rmsd_trace=rmsd_trace,
    )
