"""Static PNG figures for the report command."""

from __future__ import annotations

import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no Software/date chunks, so reruns give identical files
PNG_METADATA = {"Software": None}


def _save(fig, path) -> None:
    fig.savefig(path, dpi=100, metadata=PNG_METADATA)
    plt.close(fig)


def metric_distributions(per_image: dict, path) -> None:
    """Box plots of per-image PSNR and SSIM for each method."""
    names = list(per_image)
    fig, axes = plt.subplots(1, 2, figsize=(max(6, 1.6 * len(names) + 2), 4))
    for ax, key, label in ((axes[0], "psnr_db", "PSNR (dB)"), (axes[1], "ssim", "SSIM")):
        data = []
        for n in names:
            vals = [r[key] for r in per_image[n] if r.get(key) is not None]
            data.append([v for v in vals if isinstance(v, (int, float)) and math.isfinite(v)])
        shown = [(n, d) for n, d in zip(names, data) if d]
        if shown:
            ax.boxplot([d for _, d in shown])
            ax.set_xticks(range(1, len(shown) + 1), [n for n, _ in shown], rotation=30, ha="right")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def loss_curves(logs: dict, path) -> None:
    """Per-step training losses (one panel per run) with validation PSNR on a twin axis."""
    fig, axes = plt.subplots(len(logs), 1, figsize=(7, 3 * len(logs)), squeeze=False)
    for ax, (name, records) in zip(axes[:, 0], logs.items()):
        steps = [r for r in records if not r.get("validation")]
        keys = sorted({k for r in steps for k in r} - {"stage", "epoch", "step", "gate"})
        for k in keys:
            xs = [r["step"] for r in steps if k in r]
            ys = [r[k] for r in steps if k in r]
            ax.plot(xs, ys, label=k, lw=0.8)
        ax.set_yscale("log")
        ax.set_title(name)
        ax.set_xlabel("step")
        val = [r for r in records if r.get("validation") and "val_psnr" in r]
        if val:
            tw = ax.twinx()
            tw.plot([r["step"] for r in val], [r["val_psnr"] for r in val], "k.--", label="val PSNR")
            tw.set_ylabel("val PSNR (dB)")
        ax.legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    _save(fig, path)


def reconstruction_panels(panel_dir, path) -> None:
    """Side-by-side magnitudes per method, with predicted ROI contours in yellow."""
    panel_dir = Path(panel_dir)
    order = ["ground_truth"] + json.loads((panel_dir / "order.json").read_text())
    images = {n: np.load(panel_dir / f"{n}.npy") for n in order}
    segs = {n: np.load(panel_dir / f"{n}.seg.npy") for n in order if (panel_dir / f"{n}.seg.npy").exists()}
    labels = np.load(panel_dir / "labels.npy")
    rows = len(images["ground_truth"])
    fig, axes = plt.subplots(rows, len(order), figsize=(2 * len(order), 2 * rows), squeeze=False)
    vmax = float(images["ground_truth"].max()) or 1.0
    for j, name in enumerate(order):
        for i in range(rows):
            ax = axes[i, j]
            ax.imshow(images[name][i], cmap="gray", vmin=0, vmax=vmax)
            mask = labels[i] if name == "ground_truth" else segs.get(name, [None] * rows)[i]
            if mask is not None and np.any(mask):
                ax.contour(mask.astype(float), levels=[0.5], colors="yellow", linewidths=0.8)
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(name, fontsize=8)
    fig.tight_layout()
    _save(fig, path)
