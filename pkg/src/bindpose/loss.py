"""Training objectives for pose, affinity and the self-supervised tasks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from bindpose.symmetry import EquivalentIndexSet

FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 1.0


@dataclass
class LossWeights:
    sym: float = 1.0  # gamma1
    affinity: float = 1.0  # gamma2
    screening: float = 1.0  # gamma3

    def __post_init__(self) -> None:
        if min(self.sym, self.affinity, self.screening) < 0:
            raise ValueError("loss weights must be non-negative")


def _t(x, like: torch.Tensor | None = None) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    dtype = like.dtype if like is not None else torch.float64
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def _distance(diff: torch.Tensor) -> torch.Tensor:
    # exact norm; gradient at zero taken as zero
    sq = (diff * diff).sum(-1)
    safe = torch.where(sq > 0, sq, torch.ones_like(sq))
    return torch.where(sq > 0, torch.sqrt(safe), torch.zeros_like(sq))


def coord_loss(pred, native, mapping=None) -> torch.Tensor:
    """Mean Euclidean distance between predicted atoms and their mapped native atoms."""
    pred = _t(pred)
    native = _t(native, pred)
    if mapping is not None:
        native = native[torch.as_tensor(np.asarray(mapping), dtype=torch.long)]
    return _distance(pred - native).mean()


def sym_loss(pred, native, eqset: EquivalentIndexSet) -> tuple[torch.Tensor, np.ndarray]:
    """Minimum coordinate loss over the equivalent indexes, and the minimizing permutation.

    The permutation is chosen without gradient; the value is then
    differentiated through that fixed mapping.
    """
    pred = _t(pred)
    native = _t(native, pred)
    perms = torch.as_tensor(eqset.perms, dtype=torch.long)
    with torch.no_grad():
        per_perm = _distance(pred.detach()[None] - native[perms]).mean(-1)
        best = int(torch.argmin(per_perm))
    perm = eqset.perms[best]
    return coord_loss(pred, native, perm), perm


def affinity_loss(y_pred, y_true) -> torch.Tensor:
    y_pred = _t(y_pred)
    return ((y_pred - _t(y_true, y_pred)) ** 2).sum()


def supervised_loss(block_coords: list, native, eqset: EquivalentIndexSet,
                    y_aff=None, y_true=None, weights: LossWeights | None = None) -> torch.Tensor:
    """Weighted pose and affinity loss over one cycle's block outputs.

    Blocks 2..L-1 are averaged, the final block is added on its own and the
    first block is left out. With fewer than three blocks the average is empty
    and contributes nothing.
    """
    w = weights or LossWeights()
    n_blocks = len(block_coords)
    middle = [sym_loss(x, native, eqset)[0] for x in block_coords[1:n_blocks - 1]]
    final = sym_loss(block_coords[-1], native, eqset)[0]
    pose = final + (torch.stack(middle).sum() / (n_blocks - 2) if middle else 0.0)
    total = w.sym * pose
    if y_aff is not None and y_true is not None:
        total = total + w.affinity * affinity_loss(y_aff, y_true)
    return total


def screening_loss(y_bind, label, eps: float = 1e-7) -> torch.Tensor:
    """Binary cross-entropy of the binding probability against a 0/1 pair label."""
    y_bind = _t(y_bind)
    p = torch.clamp(y_bind, eps, 1.0 - eps)
    y = _t(label, y_bind)
    return -(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p)).mean()


def focal_loss(logits: torch.Tensor, target, gamma: float = FOCAL_GAMMA,
               alpha: float = FOCAL_ALPHA) -> torch.Tensor:
    """Mean of ``-alpha (1 - p_t)^gamma log p_t``; zero for an empty batch."""
    logits = _t(logits)
    if logits.dim() == 1:
        logits = logits[None]
    target = torch.as_tensor(np.atleast_1d(np.asarray(target)), dtype=torch.long)
    if logits.shape[0] == 0:
        return logits.sum() * 0.0
    log_p = torch.log_softmax(logits, dim=-1).gather(-1, target[:, None]).squeeze(-1)
    p_t = log_p.exp()
    return (-alpha * (1.0 - p_t) ** gamma * log_p).mean()


@dataclass
class MaskPlan:
    """Masked items (parent-graph ids) and their pre-masking classes."""

    protein_nodes: np.ndarray
    ligand_nodes: np.ndarray
    edges: np.ndarray  # [M, 2], both directions listed
    atom_name: np.ndarray
    residue: np.ndarray
    element: np.ndarray
    bond: np.ndarray

    @property
    def node_ids(self) -> np.ndarray:
        return np.concatenate([self.protein_nodes, self.ligand_nodes])


def mask_logits(feats: torch.Tensor, edges: torch.Tensor, index: np.ndarray,
                plan: MaskPlan, heads) -> dict[str, tuple[torch.Tensor, np.ndarray]]:
    """Logits and targets for the masked items present in a sub-graph."""
    where = {int(p): k for k, p in enumerate(index)}

    def present(ids):
        keep = np.array([int(i) in where for i in ids], dtype=bool)
        pos = np.array([where[int(i)] for i in ids[keep]], dtype=np.int64)
        return keep, torch.as_tensor(pos)

    out = {}
    keep, pos = present(plan.protein_nodes)
    out["p_atom_type"] = (heads.atom_name(feats[pos]), plan.atom_name[keep])
    out["p_res_type"] = (heads.residue(feats[pos]), plan.residue[keep])
    keep, pos = present(plan.ligand_nodes)
    out["l_elem_type"] = (heads.element(feats[pos]), plan.element[keep])
    if len(plan.edges):
        keep = np.array([int(i) in where and int(j) in where for i, j in plan.edges], dtype=bool)
        rows = torch.as_tensor([where[int(i)] for i, _ in plan.edges[keep]], dtype=torch.long)
        cols = torch.as_tensor([where[int(j)] for _, j in plan.edges[keep]], dtype=torch.long)
        out["bond_type"] = (heads.bond(edges[rows, cols]), plan.bond[keep])
    else:
        out["bond_type"] = (heads.bond(edges.reshape(-1, edges.shape[-1])[:0]), plan.bond[:0])
    return out


def mcm_loss(feats: torch.Tensor, edges: torch.Tensor, index: np.ndarray, plan: MaskPlan,
             heads) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Unweighted sum of the four focal terms, each averaged over its masked items."""
    terms = {k: focal_loss(lg, tg) for k, (lg, tg) in mask_logits(feats, edges, index, plan, heads).items()}
    return sum(terms.values()), terms


def dpr_loss(reconstructed, original) -> torch.Tensor:
    """Mean distance between denoised and original positions of the noised nodes."""
    reconstructed = _t(reconstructed)
    original = _t(original, reconstructed)
    if reconstructed.shape[0] == 0:
        return reconstructed.sum() * 0.0
    return _distance(reconstructed - original).mean()


def self_loss(mcm, dpr):
    return mcm + dpr
