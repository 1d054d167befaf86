"""Rendering: training-curve figures (PNG) and label-map colorization.

Figures are drawn with the headless Agg backend so report generation works
in any environment.  The segmentation palette is a fixed 16-color table so
image dumps are diffable across runs and machines.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# Fixed visualization palette (RGB in [0, 1]); index = class label.
# Entry 0 is the background; the table covers up to 16 classes.
SEG_PALETTE = (
    (0.10, 0.10, 0.10),   # 0  background (near-black)
    (0.90, 0.10, 0.10),   # 1  red
    (0.95, 0.60, 0.10),   # 2  orange
    (0.90, 0.90, 0.15),   # 3  yellow
    (0.45, 0.80, 0.15),   # 4  chartreuse
    (0.10, 0.75, 0.30),   # 5  green
    (0.10, 0.80, 0.75),   # 6  teal
    (0.15, 0.55, 0.90),   # 7  azure
    (0.25, 0.25, 0.95),   # 8  indigo
    (0.60, 0.25, 0.90),   # 9  violet
    (0.85, 0.20, 0.80),   # 10 magenta
    (0.95, 0.45, 0.65),   # 11 pink
    (0.55, 0.35, 0.15),   # 12 brown
    (0.65, 0.65, 0.65),   # 13 gray
    (0.30, 0.45, 0.30),   # 14 olive
    (0.95, 0.95, 0.95),   # 15 white
)


def labels_to_rgb(labels) -> np.ndarray:
    """Map an integer label plane (h, w) to a (3, h, w) float RGB image."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"label plane must be 2-D, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= len(SEG_PALETTE):
        raise ValueError(
            f"labels must lie in [0, {len(SEG_PALETTE)}) for the fixed palette")
    table = np.asarray(SEG_PALETTE, dtype=np.float32)
    return table[labels].transpose(2, 0, 1)


def _series(history, key):
    return ([row["iteration"] for row in history],
            [row[key] for row in history])


def _stage_boundaries(history):
    bounds = []
    for prev, row in zip(history, history[1:]):
        if row["stage"] != prev["stage"]:
            bounds.append(row["iteration"])
    return bounds


def plot_loss_curves(history, path):
    """Per-term training losses over iterations, stage changes marked."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for key, label in (("loss_total", "total"), ("loss_rgb", "rgb"),
                       ("loss_seg", "seg/ce"), ("loss_depth", "depth"),
                       ("loss_lat", "latent"), ("loss_pp", "pseudo-pair")):
        xs, ys = _series(history, key)
        ax.plot(xs, ys, label=label, linewidth=1.0)
    for x in _stage_boundaries(history):
        ax.axvline(x, color="gray", linestyle=":", linewidth=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("symlog")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": "mmnets"})
    plt.close(fig)


def plot_alignment_curves(history, path):
    """Latent alignment factors per modality pair over iterations."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for key, label in (("af_rs", "anchor/b"), ("af_rd", "anchor/c"),
                       ("af_ds", "b/c")):
        xs, ys = _series(history, key)
        pts = [(x, y) for x, y in zip(xs, ys) if not np.isnan(y)]
        if pts:
            ax.plot(*zip(*pts), label=label, linewidth=1.2)
    for x in _stage_boundaries(history):
        ax.axvline(x, color="gray", linestyle=":", linewidth=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("alignment factor (mean cosine)")
    ax.set_ylim(-0.05, 1.05)
    if ax.lines:
        ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": "mmnets"})
    plt.close(fig)


def render_report_figures(history, out_dir):
    """Write the standard report figures; returns the created paths."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "loss_curves.png", out / "alignment_curves.png"]
    plot_loss_curves(history, paths[0])
    plot_alignment_curves(history, paths[1])
    return paths
