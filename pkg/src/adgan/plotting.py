"""Figures written next to CLI reports. Uses the non-interactive Agg backend."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "axes.linewidth": 0.8,
    "figure.dpi": 110,
}
PALETTE = ["#0C5DA5", "#00A08A", "#F2AD00", "#F98400", "#5BBCD6", "#B40F20"]


def _finish(ax):
    for spine in ("top", "right"):
        ax.spines[spine].set_visible(False)
    ax.grid(alpha=0.25, linewidth=0.5, linestyle="--")


def save_figure(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_training_log(log_csv, path) -> Path:
    with open(log_csv) as fh:
        rows = list(csv.DictReader(fh))
    it = np.array([int(r["iteration"]) for r in rows])
    with plt.rc_context(STYLE):
        fig, (ax, ax_lr) = plt.subplots(1, 2, figsize=(8, 3))
        for color, key in zip(PALETTE, ("L_rec", "L_ctr", "L_cyc", "L_adv_g", "L_adv_d")):
            ax.plot(it, [float(r[key]) for r in rows], lw=0.8, color=color, label=key)
        ax.set_yscale("log")
        ax.set_xlabel("iteration")
        ax.legend(frameon=False, fontsize=7)
        ax_lr.plot(it, [float(r["lr"]) for r in rows], color="k", lw=0.8)
        ax_lr.set_xlabel("iteration")
        ax_lr.set_ylabel("learning rate")
        for a in (ax, ax_lr):
            _finish(a)
        return save_figure(fig, path)


def plot_score_distribution(scores: dict[str, list[float]], path, title: str = "") -> Path:
    """Box plot per metric over images."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(scores), 3))
        names = list(scores)
        ax.boxplot([scores[n] for n in names], showmeans=True)
        ax.set_xticks(range(1, len(names) + 1), names)
        ax.set_ylim(0, 1.02)
        ax.set_title(title)
        _finish(ax)
        return save_figure(fig, path)


def plot_offsets(offsets: list[float], count_deltas: list[int], path) -> Path:
    with plt.rc_context(STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(7, 3))
        a.hist(offsets, bins=30, color=PALETTE[0])
        a.set_xlabel("centroid offset (px)")
        deltas = np.asarray(count_deltas, dtype=int)
        if deltas.size:
            b.hist(deltas, bins=np.arange(deltas.min() - 0.5, deltas.max() + 1.5), color=PALETTE[3])
        b.set_xlabel("object count delta (pred - ref)")
        for ax in (a, b):
            _finish(ax)
        return save_figure(fig, path)


def plot_filmstrip(frames: list[np.ndarray], path, labels=None) -> Path:
    n = len(frames)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, n, figsize=(1.4 * n, 1.6), squeeze=False)
        for k, (ax, f) in enumerate(zip(axes[0], frames)):
            ax.imshow(f, cmap="gray", vmin=-1, vmax=1)
            ax.set_axis_off()
            if labels is not None:
                ax.set_title(labels[k], fontsize=7)
        return save_figure(fig, path)
