"""Run reconstruction methods over a split with fixed per-image masks and
collect PSNR / SSIM / Dice records and the SIS."""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff.tensor import Tensor, no_grad
from .metrics import MetricsReport, aggregate_report, dice, psnr, sis, ssim
from .networks import binarize, segment
from .phantoms import Split, batch_iterator
from .training import Batch, evaluation_batch, load_model, magnitude

# A method maps a simulated batch to reconstructions in channel layout [B, 2, H, W].
Method = Callable[[Batch], np.ndarray]


def zero_filled_method(batch: Batch) -> np.ndarray:
    return batch.x_u


def identity_method(batch: Batch) -> np.ndarray:
    """Returns the ground truth; PSNR is infinite and SIS exactly 1."""
    return batch.gt


def checkpoint_method(directory) -> tuple[Method, dict]:
    """Reconstruction method from a stage-1, stage-2 or joint checkpoint."""
    kind, models, manifest = load_model(directory)
    if "R" not in models:
        raise ValueError(f"{directory} ({kind}) holds no reconstruction network")
    R, V = models["R"], models.get("V")

    def run(batch: Batch) -> np.ndarray:
        with no_grad():
            out = R(Tensor(batch.x_u), batch.sample)
            if V is not None:
                out, _ = V(out)
        return out.data

    # content id only, so identical runs in different directories report identically
    info = {"kind": kind, "checkpoint_id": checkpoint_id(directory)}
    return run, info


def checkpoint_id(directory) -> str:
    return hashlib.sha256((Path(directory) / "manifest.json").read_bytes()).hexdigest()[:16]


def segmenter_fn(directory) -> Callable[[np.ndarray], np.ndarray]:
    kind, models, _ = load_model(directory)
    if "S" not in models:
        raise ValueError(f"{directory} ({kind}) holds no segmentation network")
    S = models["S"]

    def run(mags: np.ndarray) -> np.ndarray:
        return binarize(segment(S, np.asarray(mags, np.float32)))

    return run


def reconstruct_split(method: Method, split: Split, ratio: float, mask_seed: int, batch_size: int = 16):
    """Ground-truth and reconstructed magnitudes for every image of ``split``."""
    gts, recs = [], []
    for index in batch_iterator(split, batch_size, shuffle=False):
        batch = evaluation_batch(split, index, ratio, mask_seed)
        gts.append(magnitude(batch.gt))
        recs.append(magnitude(method(batch)))
    return np.concatenate(gts), np.concatenate(recs)


def evaluate_method(
    name: str,
    method: Method,
    split: Split,
    ratio: float,
    mask_seed: int,
    segment_fn: Callable | None = None,
    provenance: dict | None = None,
) -> MetricsReport:
    gt, rec = reconstruct_split(method, split, ratio, mask_seed)
    peak = split.intensity_scale
    records = []
    seg = segment_fn(rec.astype(np.float32)) if segment_fn is not None else None
    for i, image_id in enumerate(split.ids):
        r = {"id": image_id, "psnr_db": psnr(gt[i], rec[i], peak), "ssim": ssim(gt[i], rec[i], peak)}
        if seg is not None and split.labels[i].any():
            r["dice"] = dice(seg[i], split.labels[i])
        records.append(r)
    sis_value = None
    if segment_fn is not None:
        sis_value, _ = sis(rec.astype(np.float32), gt.astype(np.float32), split.labels, segment_fn)
    prov = {"ratio": ratio, "mask_seed": mask_seed, "n_images": len(split), **(provenance or {})}
    return aggregate_report(name, records, sis_value, prov)


def evaluate(
    methods: dict[str, Method],
    split: Split,
    ratio: float,
    mask_seed: int,
    segment_fn: Callable | None = None,
    provenance: dict | None = None,
    method_info: dict | None = None,
) -> dict[str, MetricsReport]:
    """One report per method; the zero-filled baseline is always added."""
    methods = {"zero_filled": zero_filled_method, **methods}
    method_info = method_info or {}
    return {
        name: evaluate_method(name, fn, split, ratio, mask_seed, segment_fn, {**(provenance or {}), **method_info.get(name, {})})
        for name, fn in methods.items()
    }
