"""Training loop: Monte-Carlo cycle choice, sample mixing, screening pairs, masking and noising."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np
import torch

from bindpose import diffcore
from bindpose.graph import (
    EDGE_BOND, EDGE_COVALENT, EDGE_DISTANCE, LIGAND, SCALE, ComplexGraph, init_ligand_coords,
)
from bindpose.loss import (
    LossWeights, MaskPlan, dpr_loss, mcm_loss, screening_loss, self_loss, supervised_loss,
)
from bindpose.net import BindPoseNet, NetConfig
from bindpose.symmetry import EquivalentIndexSet


class TrainingError(RuntimeError):
    pass


class ManifestError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    decay: float = 0.99
    batch_size: int = 1
    epochs: int = 1
    steps: int | None = None  # overrides epochs when set
    max_nodes_ladder: tuple[tuple[int, int], ...] = ((0, 200),)  # (first epoch, max_nodes)
    gamma1: float = 1.0
    gamma2: float = 1.0
    gamma3: float = 1.0
    mask_ratio: float = 0.15
    noise_sigma: float = 2.0  # Angstrom
    labeled_fraction: float = 0.5
    screening_fraction: float = 0.0  # share of labeled draws taken from the screening stream
    init_sigma: float = 10.0  # Angstrom
    grad_clip: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        self.max_nodes_ladder = tuple(sorted((int(e), int(n)) for e, n in self.max_nodes_ladder))
        if self.lr <= 0 or not 0 < self.decay <= 1:
            raise ValueError("lr must be positive and decay in (0, 1]")
        if self.batch_size < 1 or self.epochs < 1 or (self.steps is not None and self.steps < 0):
            raise ValueError("batch_size and epochs must be positive")
        for name in ("mask_ratio", "labeled_fraction", "screening_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.max_nodes_ladder or self.max_nodes_ladder[0][0] != 0:
            raise ValueError("max_nodes ladder must start at epoch 0")
        LossWeights(self.gamma1, self.gamma2, self.gamma3)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.gamma1, self.gamma2, self.gamma3)

    def max_nodes(self, epoch: int) -> int:
        value = self.max_nodes_ladder[0][1]
        for start, n in self.max_nodes_ladder:
            if epoch >= start:
                value = n
        return value

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_nodes_ladder"] = [list(x) for x in self.max_nodes_ladder]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


# ---------------------------------------------------------------- samples


@dataclass
class LabeledSample:
    graph: ComplexGraph
    eqset: EquivalentIndexSet


@dataclass
class ScreenSample:
    graph: ComplexGraph
    label: int


@dataclass
class UnlabeledSample:
    graph: ComplexGraph


def draw_cycle(rng: np.random.Generator, n_cycles: int) -> int:
    """Uniform draw of the cycle that records gradient, in 1..n_cycles."""
    return int(rng.integers(1, n_cycles + 1))


# ---------------------------------------------------------------- manifest and screening pairs


MANIFEST_COLUMNS = ("complex_id", "uniprot_id", "protein_name", "ligand_code", "affinity", "split")


@dataclass(frozen=True)
class ManifestEntry:
    complex_id: str
    uniprot_id: str
    protein_name: str
    ligand_code: str
    affinity: float | None
    split: str


@dataclass
class PairManifest:
    entries: list[ManifestEntry]

    def __post_init__(self) -> None:
        ids = [e.complex_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate complex ids in manifest")

    def split(self, tag: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == tag]

    @property
    def splits(self) -> list[str]:
        return sorted({e.split for e in self.entries})


def read_manifest(path: str | Path) -> PairManifest:
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest") from None
        if tuple(h.strip() for h in header) != MANIFEST_COLUMNS:
            raise ManifestError(f"{path}: header must be {' '.join(MANIFEST_COLUMNS)}")
        entries = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != len(MANIFEST_COLUMNS):
                raise ManifestError(f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} columns, got {len(row)}")
            cid, uni, pname, code, aff, split = (c.strip() for c in row)
            if aff in ("", "NA", "nan"):
                value = None
            else:
                try:
                    value = float(aff)
                except ValueError:
                    raise ManifestError(f"{path}:{lineno}: bad affinity {aff!r}") from None
            entries.append(ManifestEntry(cid, uni, pname, code, value, split))
    return PairManifest(entries)


@dataclass(frozen=True)
class ScreenPair:
    protein: str  # complex id providing the pocket
    ligand: str  # complex id providing the ligand
    label: int


def is_positive(a: ManifestEntry, b: ManifestEntry) -> bool:
    """Pocket of ``a`` binds the ligand of ``b``: same complex, protein or ligand identity."""
    def same(x: str, y: str) -> bool:
        return bool(x) and x == y

    return (a.complex_id == b.complex_id or same(a.uniprot_id, b.uniprot_id)
            or same(a.protein_name, b.protein_name) or same(a.ligand_code, b.ligand_code))


def label_pairs(manifest: PairManifest, split: str = "train") -> list[ScreenPair]:
    entries = manifest.split(split)
    return [ScreenPair(a.complex_id, b.complex_id, int(is_positive(a, b))) for a in entries for b in entries]


def make_screening_pairs(manifest: PairManifest, seed, batch_size: int = 2,
                         split: str = "train") -> Iterator[list[ScreenPair]]:
    """Endless stream of batches with equal numbers of positive and negative pairs.

    Only entries of ``split`` are paired, so held-out complexes never leak in.
    """
    if batch_size < 2 or batch_size % 2:
        raise ValueError("screening batch size must be even and at least 2")
    pairs = label_pairs(manifest, split)
    pos = [p for p in pairs if p.label]
    neg = [p for p in pairs if not p.label]
    if not pos:
        raise ManifestError("manifest yields no positive pairs")
    if not neg:
        raise ManifestError("manifest yields no negative pairs to balance against")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def stream():
        half = batch_size // 2
        while True:
            batch = [pos[i] for i in rng.integers(0, len(pos), half)]
            batch += [neg[i] for i in rng.integers(0, len(neg), half)]
            yield batch

    return stream()


# ---------------------------------------------------------------- masking and noise


def _count(rng: np.random.Generator, ratio: float, n: int, minimum: int) -> int:
    # stochastic rounding keeps the expected masked share at exactly ``ratio``
    exact = ratio * n
    k = int(math.floor(exact))
    k += int(rng.random() < exact - k)
    return min(n, max(k, minimum))


def _pick(rng: np.random.Generator, pool: np.ndarray, ratio: float, minimum: int) -> np.ndarray:
    k = _count(rng, ratio, len(pool), minimum)
    if k == 0:
        return pool[:0]
    return np.sort(rng.choice(pool, size=k, replace=False), axis=0) if pool.ndim == 1 else \
        pool[np.sort(rng.choice(len(pool), size=k, replace=False))]


def apply_mask(graph: ComplexGraph, ratio: float = 0.15, seed=0) -> tuple[ComplexGraph, MaskPlan]:
    """Mask node and intra-molecule edge attributes; targets are recorded first.

    Masked nodes lose their whole feature row; masked edges lose the covalent
    flag and bond one-hot (both directions) but keep the distance channel.
    Protein-ligand edges are never masked.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lig = np.flatnonzero(graph.roles == LIGAND)
    prot = np.flatnonzero(graph.roles != LIGAND)
    p_nodes = _pick(rng, prot, ratio, 1)
    l_nodes = _pick(rng, lig, ratio, 1)

    def pairs(ids):
        i, j = np.triu_indices(len(ids), k=1)
        return np.stack([ids[i], ids[j]], axis=1).astype(np.int64)

    p_edges = _pick(rng, pairs(prot), ratio, 2)
    l_edges = _pick(rng, pairs(lig), ratio, 2)
    undirected = np.concatenate([p_edges, l_edges]).reshape(-1, 2)
    edges = np.concatenate([undirected, undirected[:, ::-1]]) if len(undirected) else undirected

    plan = MaskPlan(
        protein_nodes=p_nodes,
        ligand_nodes=l_nodes,
        edges=edges,
        atom_name=graph.atom_class[p_nodes].copy(),
        residue=graph.residue_class[p_nodes].copy(),
        element=graph.atom_class[l_nodes].copy(),
        bond=graph.bond_class[edges[:, 0], edges[:, 1]].copy() if len(edges) else np.zeros(0, np.int64),
    )
    node_feats = graph.node_feats.copy()
    node_feats[plan.node_ids] = 0.0
    edge_feats = graph.edge_feats.copy()
    if len(edges):
        edge_feats[edges[:, 0], edges[:, 1], EDGE_COVALENT] = 0.0
        edge_feats[edges[:, 0], edges[:, 1], EDGE_BOND] = 0.0
    return graph.copy(node_feats=node_feats, edge_feats=edge_feats), plan


def apply_noise(graph: ComplexGraph, sigma: float = 2.0, ratio: float = 0.15,
                seed=0) -> tuple[ComplexGraph, np.ndarray, np.ndarray]:
    """Displace a sample of protein nodes by iid N(0, sigma^2) per component (sigma in Angstrom).

    Returns the noised graph, the noised node ids and their original
    (scaled) coordinates. The distance channel is recomputed from the
    noised coordinates; every other edge channel is left alone.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    prot = np.flatnonzero(graph.roles != LIGAND)
    ids = _pick(rng, prot, ratio, 1)
    originals = graph.coords[ids].copy()
    coords = graph.coords.copy()
    coords[ids] = originals + rng.standard_normal((len(ids), 3)) * (sigma * SCALE)
    edge_feats = graph.edge_feats.copy()
    if sigma != 0:
        dist = np.sqrt(((coords[:, None] - coords[None]) ** 2).sum(-1))
        same = graph.rigid[:, None] == graph.rigid[None, :]
        edge_feats[..., EDGE_DISTANCE] = np.where(same, dist, -1.0)
    return graph.copy(coords=coords, edge_feats=edge_feats), ids, originals


@dataclass
class MaskedPass:
    """Final-block outputs of one masked and noised forward pass."""

    feats: torch.Tensor
    edges: torch.Tensor
    index: np.ndarray  # parent ids of the sub-graph nodes
    plan: MaskPlan
    denoised: torch.Tensor  # final coords of the noised nodes present in the sub-graph
    originals: np.ndarray  # their clean coords
    noised: np.ndarray  # their coords before the pass


def masked_forward(model: BindPoseNet, graph: ComplexGraph, rng: np.random.Generator, cfg: TrainConfig,
                   grad_cycle: int | None = None, max_nodes: int | None = None) -> MaskedPass:
    """Mask, noise, re-initialize the ligand and run with the noised nodes movable."""
    masked, plan = apply_mask(graph, cfg.mask_ratio, rng)
    noised, ids, originals = apply_noise(masked, cfg.noise_sigma, cfg.mask_ratio, rng)
    start = init_ligand_coords(noised, rng, sigma=cfg.init_sigma)
    movable = start.roles == LIGAND
    movable[ids] = True
    trace = model.run(start, rng, grad_cycle=grad_cycle, movable=movable, max_nodes=max_nodes)[-1]
    where = {int(p): k for k, p in enumerate(trace.index)}
    present = np.array([int(i) in where for i in ids], dtype=bool)
    rows = torch.as_tensor([where[int(i)] for i in ids[present]], dtype=torch.long)
    return MaskedPass(trace.feats[-1], trace.edges[-1], trace.index, plan, trace.coords[-1][rows],
                      originals[present], start.coords[ids[present]])


def self_supervised_report(model: BindPoseNet, graphs: Sequence[ComplexGraph], seed, cfg: TrainConfig,
                           repeats: int = 1) -> dict:
    """Masked-class accuracy per head against a majority-class guess, and denoising error.

    The majority class of each head is taken from the evaluated targets
    themselves. The no-update baseline for denoising is the mean
    displacement of the noised nodes (Angstrom).
    """
    from bindpose.loss import mask_logits

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    preds: dict[str, list] = {}
    targets: dict[str, list] = {}
    dist, base = [], []
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for _ in range(repeats):
            for g in graphs:
                out = masked_forward(model, g, rng, cfg)
                for name, (logits, target) in mask_logits(out.feats, out.edges, out.index, out.plan,
                                                          model.mask_heads).items():
                    preds.setdefault(name, []).extend(logits.argmax(-1).tolist())
                    targets.setdefault(name, []).extend(np.asarray(target).tolist())
                orig = torch.as_tensor(out.originals, dtype=out.denoised.dtype)
                dist.extend((torch.linalg.norm(out.denoised - orig, dim=-1) / SCALE).tolist())
                base.extend((np.linalg.norm(out.noised - out.originals, axis=-1) / SCALE).tolist())
    model.train(was_training)
    heads = {}
    for name in targets:
        t = np.asarray(targets[name])
        p = np.asarray(preds[name])
        majority = np.bincount(t).max() / len(t) if len(t) else float("nan")
        heads[name] = {"accuracy": float((p == t).mean()) if len(t) else float("nan"),
                       "majority": float(majority), "count": int(len(t))}
    return {"heads": heads, "dpr": float(np.mean(dist)), "noise": float(np.mean(base))}


# ---------------------------------------------------------------- trainer


class _Pool:
    """Epoch-shuffled cyclic sampler over a list."""

    def __init__(self, items: Sequence, rng: np.random.Generator):
        self.items = list(items)
        self.rng = rng
        self.order: list[int] = []

    def __len__(self) -> int:
        return len(self.items)

    def next(self):
        if not self.order:
            self.order = [int(i) for i in self.rng.permutation(len(self.items))]
        return self.items[self.order.pop(0)]


class Trainer:
    """Adam training over labeled complexes, screening pairs and unlabeled pairs.

    Each sample draws its gradient cycle uniformly; earlier cycles run
    without gradient. The learning rate is ``lr * decay**epoch`` with
    epochs counted in passes over the largest pool.
    """

    def __init__(self, model: BindPoseNet, cfg: TrainConfig,
                 labeled: Sequence[LabeledSample] = (),
                 unlabeled: Sequence[UnlabeledSample] = (),
                 screening: Iterator[list[ScreenSample]] | None = None,
                 log: Callable[[dict], None] | None = None):
        if not labeled and not unlabeled and screening is None:
            raise ValueError("nothing to train on")
        self.model = model
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.labeled = _Pool(labeled, self.rng)
        self.unlabeled = _Pool(unlabeled, self.rng)
        self.screening = screening
        self._screen_buffer: list[ScreenSample] = []
        self.optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(0.9, 0.999), eps=1e-8)
        self.step = 0
        self.log = log
        self.history: list[dict] = []

    @property
    def steps_per_epoch(self) -> int:
        size = max(len(self.labeled), len(self.unlabeled), 1)
        return math.ceil(size / self.cfg.batch_size)

    @property
    def epoch(self) -> int:
        return self.step // self.steps_per_epoch

    def lr_at(self, epoch: int) -> float:
        return self.cfg.lr * self.cfg.decay ** epoch

    @property
    def total_steps(self) -> int:
        return self.cfg.steps if self.cfg.steps is not None else self.cfg.epochs * self.steps_per_epoch

    # ---- sample drawing

    def _next_screen(self) -> ScreenSample:
        if not self._screen_buffer:
            self._screen_buffer = list(next(self.screening))
        return self._screen_buffer.pop(0)

    def draw(self):
        has_sup = len(self.labeled) > 0 or self.screening is not None
        if not len(self.unlabeled):
            supervised = True
        elif not has_sup:
            supervised = False
        else:
            supervised = self.rng.random() < self.cfg.labeled_fraction
        if not supervised:
            return self.unlabeled.next()
        if self.screening is not None and (not len(self.labeled) or self.rng.random() < self.cfg.screening_fraction):
            return self._next_screen()
        return self.labeled.next()

    # ---- losses

    def _tensor(self, x) -> torch.Tensor:
        return torch.as_tensor(np.asarray(x), dtype=self.model.dtype)

    def sample_loss(self, sample, cycle: int, max_nodes: int) -> tuple[torch.Tensor, dict]:
        model, cfg = self.model, self.cfg
        if isinstance(sample, UnlabeledSample):
            out = masked_forward(model, sample.graph, self.rng, cfg, grad_cycle=cycle, max_nodes=max_nodes)
            mcm, terms = mcm_loss(out.feats, out.edges, out.index, out.plan, model.mask_heads)
            dpr = dpr_loss(out.denoised, self._tensor(out.originals))
            parts = {k: float(v.detach()) for k, v in terms.items()}
            parts.update(mcm=float(mcm.detach()), dpr=float(dpr.detach()))
            return self_loss(mcm, dpr), parts

        start = init_ligand_coords(sample.graph, self.rng, sigma=cfg.init_sigma)
        trace = model.run(start, self.rng, grad_cycle=cycle, max_nodes=max_nodes)[-1]
        y_aff, y_bind = model.heads(trace.feats[-1], trace.edges[-1])
        if isinstance(sample, ScreenSample):
            loss = cfg.gamma3 * screening_loss(y_bind, float(sample.label))
            return loss, {"screening": float(loss.detach())}
        lig = torch.as_tensor(trace.ligand)
        blocks = [x[lig] for x in trace.coords]
        native = self._tensor(sample.graph.native[sample.graph.ligand_mask])
        y_true = None if sample.graph.affinity is None else sample.graph.affinity * SCALE
        loss = supervised_loss(blocks, native, sample.eqset, y_aff, y_true, cfg.weights)
        with torch.no_grad():
            pose = supervised_loss(blocks, native, sample.eqset, None, None, LossWeights(1.0, 0.0, 0.0))
        return loss, {"supervised": float(loss.detach()), "pose": float(pose)}

    def train_step(self, batch: Sequence | None = None) -> dict:
        """One optimizer update over ``batch`` (drawn from the pools when omitted)."""
        cfg = self.cfg
        if batch is None:
            batch = [self.draw() for _ in range(cfg.batch_size)]
        epoch = self.epoch
        lr = self.lr_at(epoch)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        max_nodes = cfg.max_nodes(epoch)
        self.optimizer.zero_grad(set_to_none=True)
        self.model.train()
        total = 0.0
        parts: dict[str, float] = {}
        cycles = []
        for sample in batch:
            cycle = draw_cycle(self.rng, self.model.cfg.n_cycles)
            cycles.append(cycle)
            loss, comp = self.sample_loss(sample, cycle, max_nodes)
            if not torch.isfinite(loss):
                self.optimizer.zero_grad(set_to_none=True)
                raise TrainingError(
                    f"non-finite loss at step {self.step}: kind={type(sample).__name__} "
                    f"graph={sample.graph.name!r} cycle={cycle} components={comp}"
                )
            (loss / len(batch)).backward()
            total += float(loss.detach()) / len(batch)
            for k, v in comp.items():
                parts[k] = parts.get(k, 0.0) + v / len(batch)
        grad_norm = float(torch.nn.utils.clip_grad_norm_(self.model.parameters(), cfg.grad_clip))
        if not math.isfinite(grad_norm):
            self.optimizer.zero_grad(set_to_none=True)
            raise TrainingError(f"non-finite gradient norm at step {self.step}")
        self.optimizer.step()
        self.step += 1
        record = {"step": self.step, "epoch": epoch, "lr": lr, "loss": total, "cycles": cycles,
                  "kinds": [type(s).__name__ for s in batch], "grad_norm": grad_norm, **parts}
        self.history.append(record)
        if self.log is not None:
            self.log(record)
        return record

    def fit(self, steps: int | None = None, callback: Callable[[dict], None] | None = None) -> list[dict]:
        target = self.total_steps if steps is None else self.step + steps
        out = []
        while self.step < target:
            rec = self.train_step()
            out.append(rec)
            if callback is not None:
                callback(rec)
        return out

    # ---- checkpoints

    def state(self) -> tuple[dict[str, torch.Tensor], dict]:
        tensors = {f"model.{k}": v for k, v in self.model.state_dict().items()}
        opt = self.optimizer.state_dict()
        for idx, st in opt["state"].items():
            for name, value in st.items():
                tensors[f"adam.{idx}.{name}"] = torch.as_tensor(value)
        meta = {
            "net": self.model.cfg.to_dict(),
            "train": self.cfg.to_dict(),
            "step": self.step,
            "rng": self.rng.bit_generator.state,
            "pools": {"labeled": self.labeled.order, "unlabeled": self.unlabeled.order},
            "dtype": str(self.model.dtype).replace("torch.", ""),
        }
        return tensors, meta

    def save(self, path: str | Path) -> None:
        tensors, meta = self.state()
        with open(path, "wb") as fh:
            diffcore.write_checkpoint(fh, tensors, meta)

    def restore(self, path: str | Path) -> None:
        """Resume parameters, optimizer moments, step counter and RNG state."""
        tensors, meta = load_tensors(path)
        load_weights(self.model, tensors)
        opt = self.optimizer.state_dict()
        state: dict[int, dict] = {}
        for key, value in tensors.items():
            if key.startswith("adam."):
                _, idx, name = key.split(".", 2)
                state.setdefault(int(idx), {})[name] = value.clone()
        opt["state"] = state
        self.optimizer.load_state_dict(opt)
        self.step = int(meta["step"])
        self.rng.bit_generator.state = meta["rng"]
        self.labeled.order = [int(i) for i in meta.get("pools", {}).get("labeled", [])]
        self.unlabeled.order = [int(i) for i in meta.get("pools", {}).get("unlabeled", [])]


def load_tensors(path: str | Path) -> tuple[dict[str, torch.Tensor], dict]:
    with open(path, "rb") as fh:
        return diffcore.read_checkpoint(fh)


def load_weights(model: BindPoseNet, tensors: dict[str, torch.Tensor]) -> None:
    state = {k[len("model."):]: v for k, v in tensors.items() if k.startswith("model.")}
    model.load_state_dict({k: v.to(model.dtype) if v.is_floating_point() else v for k, v in state.items()})


def load_model(path: str | Path) -> tuple[BindPoseNet, dict]:
    tensors, meta = load_tensors(path)
    model = BindPoseNet(NetConfig(**meta["net"]))
    if meta.get("dtype") == "float64":
        model = model.double()
    load_weights(model, tensors)
    return model, meta


def save_model(path: str | Path, model: BindPoseNet, meta: dict | None = None) -> None:
    tensors = {f"model.{k}": v for k, v in model.state_dict().items()}
    full = {"net": model.cfg.to_dict(), "step": 0, "dtype": str(model.dtype).replace("torch.", "")}
    full.update(meta or {})
    with open(path, "wb") as fh:
        diffcore.write_checkpoint(fh, tensors, full)


def write_log_line(fh, record: dict) -> None:
    fh.write(json.dumps(record, sort_keys=True) + "\n")
    fh.flush()
