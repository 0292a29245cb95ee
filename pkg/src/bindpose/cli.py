"""Command-line front end: featurize, train, predict, screen, evaluate.

Machine-readable results go to stdout as JSON lines or TSV; progress and
the resolved configuration are logged to stderr. Exit codes: 0 success,
1 runtime failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("bindpose")


class InputError(Exception):
    """Bad user input: missing files, unreadable formats, inconsistent data."""


def _emit(record: dict) -> None:
    sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")
    sys.stdout.flush()


def _read_text(path: str | Path, what: str) -> str:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{what} not found: {path}")
    return path.read_text()


def _load_complex(protein_path, ligand_path, cutoff: float, strict: bool = True, chain: str | None = None):
    from bindpose.chemio import parse_pdb, parse_sdf, select_pocket

    ligand = parse_sdf(_read_text(ligand_path, "ligand file"))
    protein = parse_pdb(_read_text(protein_path, "protein file"), chain=chain, strict=strict)
    return ligand, select_pocket(protein, ligand, cutoff)


def _entry_paths(data_dir: Path, cid: str) -> tuple[Path, Path]:
    return data_dir / f"{cid}_protein.pdb", data_dir / f"{cid}_ligand.sdf"


def _setup_torch() -> None:
    import torch

    torch.set_num_threads(1)


# ---------------------------------------------------------------- featurize


def cmd_featurize(args) -> int:
    from bindpose.graph import featurize, write_graph

    ligand, pocket = _load_complex(args.protein, args.ligand, args.cutoff, not args.lenient, args.chain)
    graph = featurize(pocket, ligand, affinity=args.affinity, strict=not args.lenient,
                      name=args.name or Path(args.ligand).stem)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("wb") as fh:
        write_graph(graph, fh)
    if args.json:
        Path(args.json).write_text(json.dumps(graph.to_json()) + "\n")
    _emit({"command": "featurize", "out": str(out), "nodes": len(graph), "ligand_nodes": graph.n_ligand,
           "protein_nodes": len(graph) - graph.n_ligand, "pocket_residues": len(pocket.residues)})
    return 0


# ---------------------------------------------------------------- train


def _training_sets(manifest, data_dir: Path, cutoff: float, run_cfg):
    from bindpose.graph import featurize
    from bindpose.symmetry import enumerate_equivalent_indexes
    from bindpose.trainer import LabeledSample, ScreenSample, UnlabeledSample, make_screening_pairs

    entries = manifest.split("train")
    if not entries:
        raise InputError("manifest has no entries with split 'train'")
    loaded = {}
    for e in entries:
        prot, lig = _entry_paths(data_dir, e.complex_id)
        loaded[e.complex_id] = _load_complex(prot, lig, cutoff)
    labeled = []
    for e in entries:
        ligand, pocket = loaded[e.complex_id]
        graph = featurize(pocket, ligand, affinity=e.affinity, name=e.complex_id)
        labeled.append(LabeledSample(graph, enumerate_equivalent_indexes(ligand)))
    unlabeled = []
    if run_cfg.train.labeled_fraction < 1.0:
        unlabeled = [UnlabeledSample(s.graph) for s in labeled]
    screening = None
    if run_cfg.train.screening_fraction > 0:
        pairs = make_screening_pairs(manifest, run_cfg.train.seed, batch_size=2)
        cache: dict[tuple[str, str], object] = {}

        def graphs():
            for batch in pairs:
                out = []
                for p in batch:
                    key = (p.protein, p.ligand)
                    if key not in cache:
                        pocket = loaded[p.protein][1]
                        ligand = loaded[p.ligand][0]
                        cache[key] = featurize(pocket, ligand, name=f"{p.protein}:{p.ligand}")
                    out.append(ScreenSample(cache[key], p.label))
                yield out

        screening = graphs()
    return labeled, unlabeled, screening


def cmd_train(args) -> int:
    import torch

    from bindpose.config import load_run_config
    from bindpose.net import BindPoseNet
    from bindpose.trainer import Trainer, read_manifest, write_log_line

    run_cfg = load_run_config(args.config, args.seed)
    log.info("resolved config %s", json.dumps(run_cfg.to_dict(), sort_keys=True))
    manifest_path = Path(args.manifest)
    if not manifest_path.is_file():
        raise InputError(f"manifest not found: {manifest_path}")
    manifest = read_manifest(manifest_path)
    data_dir = Path(args.data_dir) if args.data_dir else manifest_path.parent
    labeled, unlabeled, screening = _training_sets(manifest, data_dir, args.cutoff, run_cfg)

    torch.manual_seed(run_cfg.train.seed)
    model = BindPoseNet(run_cfg.net)
    if run_cfg.dtype == "float64":
        model = model.double()
    checkpoint = Path(args.checkpoint)
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(args.log) if args.log else checkpoint.with_suffix(checkpoint.suffix + ".log.jsonl")
    mode = "a" if args.resume else "w"
    with log_path.open(mode) as log_fh:
        trainer = Trainer(model, run_cfg.train, labeled, unlabeled, screening,
                          log=lambda rec: write_log_line(log_fh, rec))
        if args.resume:
            if not Path(args.resume).is_file():
                raise InputError(f"checkpoint not found: {args.resume}")
            trainer.restore(args.resume)
            log.info("resumed at step %d", trainer.step)
        start = trainer.step
        history = trainer.fit(steps=args.steps)
        trainer.save(checkpoint)
    figures = None
    if args.figures and history:
        from bindpose import report

        figures = [str(report.loss_curve(history, Path(args.figures) / "loss_curve.png"))]
    _emit({
        "command": "train", "checkpoint": str(checkpoint), "log": str(log_path),
        "start_step": start, "step": trainer.step, "seed": run_cfg.train.seed,
        "initial_loss": history[0]["loss"] if history else None,
        "final_loss": history[-1]["loss"] if history else None,
        "figures": figures,
    })
    return 0


# ---------------------------------------------------------------- predict


def _load_checkpoint(path):
    from bindpose.trainer import load_model

    if not Path(path).is_file():
        raise InputError(f"checkpoint not found: {path}")
    try:
        model, meta = load_model(path)
    except (KeyError, ValueError) as exc:
        raise InputError(f"unreadable checkpoint {path}: {exc}") from None
    return model, meta


def cmd_predict(args) -> int:
    from bindpose.chemio import emit_sdf
    from bindpose.graph import featurize
    from bindpose.net import predict
    from bindpose.symmetry import enumerate_equivalent_indexes

    model, _ = _load_checkpoint(args.checkpoint)
    ligand, pocket = _load_complex(args.protein, args.ligand, args.cutoff)
    graph = featurize(pocket, ligand, name=ligand.name or Path(args.ligand).stem)
    eqset = enumerate_equivalent_indexes(ligand)
    seed = _seed(args.seed)
    record = predict(model, graph, seed=seed, n_ens=args.n_ens, eqset=eqset,
                     native=graph.ligand_coords(native=True))
    out_sdf = Path(args.out)
    out_sdf.parent.mkdir(parents=True, exist_ok=True)
    out_sdf.write_text(emit_sdf(ligand, record.coords))
    payload = {"command": "predict", "pose": str(out_sdf), "seed": seed, **record.to_json()}
    if args.json:
        Path(args.json).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if args.figures and record.rmsd_trace:
        from bindpose import report

        payload["figures"] = [str(report.rmsd_trace(record.rmsd_trace, Path(args.figures) / "rmsd_trace.png",
                                                    per_cycle=model.cfg.n_blocks))]
    _emit(payload)
    return 0


def _seed(value: int | None) -> int:
    from bindpose.config import resolve_seed

    return resolve_seed(value, None)[0]


# ---------------------------------------------------------------- screen


def cmd_screen(args) -> int:
    from bindpose.graph import featurize
    from bindpose.metrics import Candidate, ScreenPanel, enrichment_factor, screening_success
    from bindpose.net import predict
    from bindpose.trainer import is_positive, read_manifest

    model, _ = _load_checkpoint(args.checkpoint)
    manifest_path = Path(args.manifest)
    if not manifest_path.is_file():
        raise InputError(f"manifest not found: {manifest_path}")
    manifest = read_manifest(manifest_path)
    entries = manifest.entries if args.split == "all" else manifest.split(args.split)
    if not entries:
        raise InputError(f"empty panel: no manifest entries for split {args.split!r}")
    data_dir = Path(args.data_dir) if args.data_dir else manifest_path.parent
    loaded = {e.complex_id: _load_complex(*_entry_paths(data_dir, e.complex_id), args.cutoff) for e in entries}
    seed = _seed(args.seed)
    rng = np.random.default_rng(seed)
    panels, rows = [], []
    for target in entries:
        pocket = loaded[target.complex_id][1]
        binders = [e for e in entries if is_positive(target, e)]
        best_id = max(binders, key=lambda e: (e.affinity if e.affinity is not None else -np.inf,
                                              e.complex_id == target.complex_id)).complex_id
        cands = []
        for e in entries:
            graph = featurize(pocket, loaded[e.complex_id][0], name=e.complex_id)
            rec = predict(model, graph, seed=rng, n_ens=args.n_ens)
            cands.append(Candidate(e.complex_id, rec.screening_score, is_positive(target, e), e.complex_id == best_id))
        panel = ScreenPanel(target.complex_id, cands)
        panels.append(panel)
        for rank, c in enumerate(panel.ranked(), start=1):
            rows.append((target.complex_id, rank, c.id, c.score, int(c.binder), int(c.best)))
    alphas = [float(a) for a in args.alphas.split(",")]
    ef = {f"{a:g}": float(np.mean([enrichment_factor(p, a) for p in panels])) for a in alphas}
    success = {f"{a:g}": screening_success(panels, a) for a in alphas}
    tsv = "target\trank\tligand\tscore\tbinder\tbest\n" + "".join(
        f"{t}\t{r}\t{lid}\t{s:.6f}\t{b}\t{bb}\n" for t, r, lid, s, b, bb in rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(tsv)
    else:
        sys.stdout.write(tsv)
    report_data = {"command": "screen", "targets": len(panels), "seed": seed,
                   "enrichment_factor": ef, "screening_success": success}
    if args.report:
        Path(args.report).write_text(json.dumps(report_data, indent=2, sort_keys=True) + "\n")
    if args.figures:
        from bindpose import report

        report_data["figures"] = [str(report.enrichment_bars(ef, Path(args.figures) / "enrichment.png"))]
    if args.out:
        _emit(report_data)
    else:
        log.info("screen report %s", json.dumps(report_data, sort_keys=True))
    return 0


# ---------------------------------------------------------------- evaluate


def _pose_key(path: Path) -> str:
    stem = path.stem
    for suffix in ("_ligand", "_pred", "_pose"):
        if stem.endswith(suffix):
            return stem[: -len(suffix)]
    return stem


def cmd_evaluate(args) -> int:
    from bindpose.chemio import parse_sdf
    from bindpose.metrics import Candidate, ScreenPanel, enrichment_factor, rmsd, screening_success, success_rate
    from bindpose.symmetry import enumerate_equivalent_indexes

    if args.native_dir is None and args.manifest is None:
        raise InputError("give --native-dir, --manifest or both")
    pred_dir = Path(args.pred_dir)
    native_dir = Path(args.native_dir) if args.native_dir else Path(args.manifest).parent
    for d in (pred_dir, native_dir):
        if not d.is_dir():
            raise InputError(f"directory not found: {d}")
    natives = {_pose_key(p): p for p in sorted(native_dir.glob("*.sdf"))}
    if args.manifest is not None:
        from bindpose.trainer import read_manifest

        if not Path(args.manifest).is_file():
            raise InputError(f"manifest not found: {args.manifest}")
        manifest = read_manifest(args.manifest)
        entries = manifest.entries if args.split == "all" else manifest.split(args.split)
        natives = {e.complex_id: native_dir / f"{e.complex_id}_ligand.sdf" for e in entries}
        absent = [str(p) for p in natives.values() if not p.is_file()]
        if absent:
            raise InputError(f"native pose not found: {absent[0]}")
    preds = {_pose_key(p): p for p in sorted(pred_dir.glob("*.sdf"))}
    keys = sorted(set(natives) & set(preds))
    if not keys:
        raise InputError("no predicted poses match a native pose by name")
    per_complex = {}
    for key in keys:
        native = parse_sdf(natives[key].read_text())
        pred = parse_sdf(preds[key].read_text())
        if len(native) != len(pred):
            raise InputError(f"{key}: predicted pose has {len(pred)} atoms, native has {len(native)}")
        if [a.element for a in native.atoms] != [a.element for a in pred.atoms]:
            raise InputError(f"{key}: atom order of prediction and native differ")
        eqset = enumerate_equivalent_indexes(native)
        per_complex[key] = rmsd(pred.coords, native.coords, eqset)
        if args.dump_automorphisms:
            _emit({"complex": key, "automorphisms": eqset.perms.tolist(), "truncated": eqset.truncated})
    values = list(per_complex.values())
    out = {
        "command": "evaluate",
        "per_complex_rmsd": per_complex,
        "success@2": success_rate(values, 2.0),
        "success@4": success_rate(values, 4.0),
        "missing_predictions": sorted(set(natives) - set(preds)),
        "enrichment_factor": None,
        "screening_success": None,
    }
    if args.screen:
        panels: dict[str, list] = {}
        text = _read_text(args.screen, "screening table").splitlines()
        for line in text[1:]:
            if not line.strip():
                continue
            target, _, lid, score, binder, best = line.split("\t")
            panels.setdefault(target, []).append(Candidate(lid, float(score), binder == "1", best == "1"))
        built = [ScreenPanel(t, c) for t, c in panels.items()]
        if not built:
            raise InputError("empty screening table")
        alphas = [float(a) for a in args.alphas.split(",")]
        out["enrichment_factor"] = {f"{a:g}": float(np.mean([enrichment_factor(p, a) for p in built])) for a in alphas}
        out["screening_success"] = {f"{a:g}": screening_success(built, a) for a in alphas}
    if args.out:
        Path(args.out).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    if args.figures:
        from bindpose import report

        figs = [str(report.rmsd_summary(values, Path(args.figures) / "rmsd_summary.png"))]
        if out["enrichment_factor"]:
            figs.append(str(report.enrichment_bars(out["enrichment_factor"], Path(args.figures) / "enrichment.png")))
        out["figures"] = figs
    _emit(out)
    return 0


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bindpose", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("featurize", help="build a graph file from a protein PDB and a ligand SDF")
    f.add_argument("--protein", required=True)
    f.add_argument("--ligand", required=True)
    f.add_argument("--cutoff", type=float, default=15.0, help="pocket C-alpha cutoff in Angstrom")
    f.add_argument("--out", required=True)
    f.add_argument("--affinity", type=float, default=None)
    f.add_argument("--chain", default=None)
    f.add_argument("--name", default=None)
    f.add_argument("--json", default=None, help="also write the JSON debug form here")
    f.add_argument("--lenient", action="store_true", help="drop unknown protein atoms instead of failing")
    f.set_defaults(func=cmd_featurize)

    t = sub.add_parser("train", help="train on a manifest of complexes")
    t.add_argument("--manifest", required=True)
    t.add_argument("--config", default=None, help="flat key = value file")
    t.add_argument("--checkpoint", required=True, help="output checkpoint path")
    t.add_argument("--data-dir", default=None, help="directory with <id>_protein.pdb / <id>_ligand.sdf")
    t.add_argument("--resume", default=None, help="checkpoint to resume from")
    t.add_argument("--steps", type=int, default=None, help="steps to run in this invocation")
    t.add_argument("--log", default=None, help="JSON-lines training log")
    t.add_argument("--cutoff", type=float, default=15.0)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--figures", default=None, help="directory for the loss-curve figure")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="predict a pose, affinity and binding probability")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--protein", required=True)
    pr.add_argument("--ligand", required=True)
    pr.add_argument("--n-ens", type=int, default=10)
    pr.add_argument("--seed", type=int, default=None)
    pr.add_argument("--cutoff", type=float, default=15.0)
    pr.add_argument("--out", required=True, help="output SDF")
    pr.add_argument("--json", default=None, help="also write the JSON record here")
    pr.add_argument("--figures", default=None)
    pr.set_defaults(func=cmd_predict)

    s = sub.add_parser("screen", help="rank every manifest ligand against every manifest pocket")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--data-dir", default=None)
    s.add_argument("--split", default="all")
    s.add_argument("--n-ens", type=int, default=1)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--cutoff", type=float, default=15.0)
    s.add_argument("--alphas", default="0.01,0.05,0.1")
    s.add_argument("--out", default=None, help="ranked TSV (stdout when omitted)")
    s.add_argument("--report", default=None, help="JSON report path")
    s.add_argument("--figures", default=None)
    s.set_defaults(func=cmd_screen)

    e = sub.add_parser("evaluate", help="score predicted poses against native poses")
    e.add_argument("--pred-dir", required=True)
    e.add_argument("--native-dir", default=None, help="native <id>_ligand.sdf poses (default: next to --manifest)")
    e.add_argument("--manifest", default=None, help="evaluate only the complexes listed here")
    e.add_argument("--split", default="all")
    e.add_argument("--screen", default=None, help="ranked TSV from the screen command")
    e.add_argument("--alphas", default="0.01,0.05,0.1")
    e.add_argument("--out", default=None)
    e.add_argument("--figures", default=None)
    e.add_argument("--dump-automorphisms", action="store_true")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv: list[str] | None = None) -> int:
    from bindpose.chemio import ParseError, PocketError
    from bindpose.config import ConfigError
    from bindpose.graph import FeaturizeError, SamplingError
    from bindpose.trainer import ManifestError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "train":
        log.setLevel(logging.INFO)
    _setup_torch()
    try:
        return args.func(args)
    except (InputError, ParseError, PocketError, ConfigError, FeaturizeError, ManifestError, SamplingError) as exc:
        print(f"bindpose {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"bindpose {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
