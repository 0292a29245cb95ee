"""Figures written next to the command-line reports (PNG, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def loss_curve(history: Sequence[Mapping], path: str | Path, window: int = 20) -> Path:
    """Per-step loss with a trailing moving average."""
    steps = np.array([r["step"] for r in history])
    loss = np.array([r["loss"] for r in history], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, loss, lw=0.6, alpha=0.4, label="step")
    if len(loss) >= window:
        smooth = np.convolve(loss, np.ones(window) / window, mode="valid")
        ax.plot(steps[window - 1:], smooth, lw=1.5, label=f"mean of {window}")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log" if np.all(loss > 0) else "linear")
    ax.legend(frameon=False)
    return _save(fig, path)


def rmsd_summary(rmsds: Sequence[float], path: str | Path) -> Path:
    """Histogram of RMSDs and the success-rate curve over thresholds."""
    values = np.asarray(rmsds, dtype=float)
    fig, (left, right) = plt.subplots(1, 2, figsize=(8, 3.5))
    left.hist(values, bins=min(20, max(5, len(values))), color="tab:blue", alpha=0.8)
    left.axvline(2.0, color="k", ls="--", lw=1)
    left.set_xlabel("RMSD (Å)")
    left.set_ylabel("complexes")
    grid = np.linspace(0, max(4.0, float(values.max(initial=0.0)) * 1.05), 200)
    right.plot(grid, [(values < t).mean() if len(values) else 0.0 for t in grid])
    right.axvline(2.0, color="k", ls="--", lw=1)
    right.set_xlabel("threshold (Å)")
    right.set_ylabel("success rate")
    right.set_ylim(0, 1.02)
    return _save(fig, path)


def rmsd_trace(trace: Sequence[float], path: str | Path, per_cycle: int | None = None) -> Path:
    """RMSD to the reference after every coordinate update."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(np.arange(1, len(trace) + 1), trace, marker="o", ms=3)
    if per_cycle:
        for b in range(per_cycle, len(trace), per_cycle):
            ax.axvline(b + 0.5, color="0.7", lw=0.8)
    ax.set_xlabel("update")
    ax.set_ylabel("RMSD (Å)")
    return _save(fig, path)


def enrichment_bars(table: Mapping[str, float], path: str | Path, title: str = "enrichment factor") -> Path:
    keys = list(table)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(keys, [table[k] for k in keys], color="tab:green")
    ax.set_ylabel(title)
    return _save(fig, path)
