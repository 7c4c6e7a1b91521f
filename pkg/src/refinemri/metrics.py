"""Image-quality and segmentation metrics, the semantic interpretability
score, and report aggregation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff.functional import ShapeError

INF_SENTINEL = "inf"
CSV_COLUMNS = ("id", "psnr_db", "ssim", "dice")


class MetricError(ValueError):
    pass


def _same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def psnr(x, x_hat, peak: float = 1.0) -> float:
    """``10·log10(peak² / mse)`` in dB; identical inputs give ``inf``."""
    x, x_hat = np.asarray(x, np.float64), np.asarray(x_hat, np.float64)
    _same_shape(x, x_hat, "psnr")
    if peak <= 0:
        raise MetricError(f"psnr peak must be positive, got {peak}")
    mse = np.mean((x - x_hat) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(peak**2 / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    t = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(t**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(
    x,
    x_hat,
    peak: float = 1.0,
    window: str = "gaussian",
    size: int | None = None,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean local SSIM.

    ``window="gaussian"`` slides an 11x11 Gaussian (σ=1.5) over every valid
    position; ``window="block"`` averages over non-overlapping 8x8 blocks.
    """
    x, y = np.asarray(x, np.float64), np.asarray(x_hat, np.float64)
    _same_shape(x, y, "ssim")
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    if window == "gaussian":
        size = size or 11
        if min(x.shape) < size:
            raise MetricError(f"ssim: image {x.shape} smaller than {size}x{size} window")
        w = gaussian_window(size, sigma)

        def filt(a):
            return np.tensordot(sliding_window_view(a, (size, size)), w, axes=([2, 3], [0, 1]))

    elif window == "block":
        size = size or 8
        if min(x.shape) < size:
            raise MetricError(f"ssim: image {x.shape} smaller than {size}x{size} window")
        hb, wb = x.shape[0] // size, x.shape[1] // size

        def filt(a):
            return a[: hb * size, : wb * size].reshape(hb, size, wb, size).mean(axis=(1, 3))

    else:
        raise MetricError(f"unknown ssim window {window!r}")

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def dice(a, b) -> float:
    """``2|a∩b| / (|a|+|b|)``; two empty masks score 1."""
    a, b = np.asarray(a).astype(bool), np.asarray(b).astype(bool)
    _same_shape(a, b, "dice")
    total = a.sum() + b.sum()
    if total == 0:
        return 1.0
    return float(2.0 * np.logical_and(a, b).sum() / total)


def sis_from_dice(dice_recon, dice_gt) -> float:
    """Ratio of cohort means: ``mean(dice on recon) / mean(dice on ground truth)``."""
    d_rec, d_gt = float(np.mean(dice_recon)), float(np.mean(dice_gt))
    if d_gt == 0:
        raise MetricError("segmenter scores Dice 0 on every ground-truth image; SIS undefined")
    return d_rec / d_gt


def sis(recon_magnitudes, gt_magnitudes, gt_labels, segment_fn) -> tuple[float, np.ndarray]:
    """Semantic interpretability score and the per-image recon Dice values.

    Only images whose label has at least one foreground pixel take part.
    ``segment_fn`` maps ``(B, H, W)`` magnitudes to binary masks.
    """
    labels = np.asarray(gt_labels)
    keep = labels.reshape(len(labels), -1).any(axis=1)
    if not keep.any():
        raise MetricError("SIS: no image contains the object class")
    rec = np.asarray(recon_magnitudes)[keep]
    gt = np.asarray(gt_magnitudes)[keep]
    lab = labels[keep]
    seg_rec = segment_fn(rec)
    seg_gt = segment_fn(gt)
    d_rec = np.array([dice(s, t) for s, t in zip(seg_rec, lab)])
    d_gt = np.array([dice(s, t) for s, t in zip(seg_gt, lab)])
    per_image = np.full(len(labels), np.nan)
    per_image[keep] = d_rec
    return sis_from_dice(d_rec, d_gt), per_image


# -- reports -----------------------------------------------------------------------


def _mean_std(values) -> dict:
    v = np.asarray([x for x in values if x is not None and not (isinstance(x, float) and math.isnan(x))], np.float64)
    if v.size == 0:
        return {"mean": None, "std": None, "n": 0}
    if np.isinf(v).any():
        finite = np.isfinite(v)
        return {"mean": math.inf, "std": 0.0 if not finite.any() else math.inf, "n": int(v.size)}
    return {"mean": float(v.mean()), "std": float(v.std()), "n": int(v.size)}


def _encode(value):
    if isinstance(value, float):
        if math.isinf(value):
            return INF_SENTINEL if value > 0 else "-inf"
        if math.isnan(value):
            return None
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_encode(v) for v in value]
    return value


@dataclass
class MetricsReport:
    method: str
    records: list
    aggregates: dict = field(default_factory=dict)
    sis: float | None = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _encode(
            {
                "method": self.method,
                "records": self.records,
                "aggregates": self.aggregates,
                "sis": self.sis,
                "provenance": self.provenance,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in self.records:
            row = []
            for col in CSV_COLUMNS:
                v = _encode(rec.get(col))
                row.append("" if v is None else (repr(v) if isinstance(v, float) else v))
            writer.writerow(row)
        return buf.getvalue()

    def write(self, directory: str | Path) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{self.method}.json").write_text(self.to_json())
        (out / f"{self.method}.csv").write_text(self.to_csv())


def aggregate_report(method: str, records: list[dict], sis_value: float | None = None, provenance: dict | None = None) -> MetricsReport:
    """Mean and population std per metric over per-image records."""
    if not records:
        raise MetricError("aggregate_report needs at least one record")
    aggregates = {}
    for key in ("psnr_db", "ssim", "dice"):
        if any(key in r for r in records):
            aggregates[key] = _mean_std(r.get(key) for r in records)
    return MetricsReport(method, list(records), aggregates, sis_value, provenance or {})


def read_report(path: str | Path) -> dict:
    def decode(v):
        if v == INF_SENTINEL:
            return math.inf
        if v == "-inf":
            return -math.inf
        if isinstance(v, dict):
            return {k: decode(x) for k, x in v.items()}
        if isinstance(v, list):
            return [decode(x) for x in v]
        return v

    return decode(json.loads(Path(path).read_text()))
