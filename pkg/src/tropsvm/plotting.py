"""Accuracy-versus-C figures for sweep summaries."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_accuracy(rows: Sequence[dict], path: str | Path, title: str | None = None) -> Path:
    """One panel per test proportion, one line per strategy.

    ``rows`` are summary records with keys ``C``, ``proportion``,
    ``strategy`` and ``accuracy``.
    """
    if not rows:
        raise ValueError("nothing to plot")
    proportions = sorted({float(r["proportion"]) for r in rows})
    strategies = sorted({r["strategy"] for r in rows})
    fig, axes = plt.subplots(1, len(proportions), figsize=(4.2 * len(proportions), 3.4),
                             sharey=True, squeeze=False)
    for ax, prop in zip(axes[0], proportions):
        for strat in strategies:
            pts = sorted((float(r["C"]), float(r["accuracy"])) for r in rows
                         if float(r["proportion"]) == prop and r["strategy"] == strat)
            if pts:
                xs, ys = zip(*pts)
                ax.plot(xs, ys, marker="o", ms=3.5, lw=1.2, label=strat)
        ax.set_title(f"test proportion {prop:g}")
        ax.set_xlabel("C (depth / population)")
        ax.set_ylim(0.0, 1.02)
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("accuracy")
    axes[0][-1].legend(fontsize=8, loc="lower right")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path = Path(path)
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
