"""Synthetic labelled phantoms standing in for cardiac MR slices.

Each image is a smooth elliptical "body" containing a handful of random
ellipses plus (usually) one bright region of interest whose rasterized mask is
the segmentation label. A low-order smooth phase makes the image genuinely
complex-valued.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .kspace import ComplexImage

SPLITS = ("train", "val", "test")


class DatasetError(IOError):
    """A dataset directory is missing files or disagrees with its manifest."""


@dataclass
class PhantomSpec:
    size: int = 64
    counts: dict = field(default_factory=lambda: {"train": 600, "val": 150, "test": 150})
    ellipses: tuple = (3, 8)
    roi_contrast: float = 1.0
    roi_fraction: float = 0.9
    phase_order: int = 2
    phase_amplitude: float = 1.0
    intensity_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.ellipses = tuple(self.ellipses)
        if int(self.size) < 16:
            raise ValueError(f"PhantomSpec: size must be at least 16 to hold a region of interest, got {self.size}")
        for split in SPLITS:
            if int(self.counts.get(split, 0)) < 1:
                raise ValueError(f"PhantomSpec: count for split {split!r} must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ellipses"] = list(self.ellipses)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        return cls(**d)


@dataclass
class LabeledImage:
    image: ComplexImage
    label: np.ndarray
    id: str


@dataclass
class Split:
    """Images of one split held as stacked arrays."""

    images: np.ndarray  # (n, H, W) complex64
    labels: np.ndarray  # (n, H, W) uint8
    ids: list
    intensity_scale: float = 1.0

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, i: int) -> LabeledImage:
        return LabeledImage(ComplexImage(self.images[i], self.intensity_scale), self.labels[i], self.ids[i])

    def __iter__(self) -> Iterator[LabeledImage]:
        return (self[i] for i in range(len(self)))

    def subset(self, index) -> "Split":
        index = np.asarray(index)
        return Split(self.images[index], self.labels[index], [self.ids[i] for i in index], self.intensity_scale)


@dataclass
class Dataset:
    train: Split
    val: Split
    test: Split
    spec: PhantomSpec | None = None

    def split(self, name: str) -> Split:
        if name not in SPLITS:
            raise KeyError(f"unknown split {name!r}")
        return getattr(self, name)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for name in SPLITS:
            s = self.split(name)
            h.update(name.encode())
            h.update(np.ascontiguousarray(s.images).tobytes())
            h.update(np.ascontiguousarray(s.labels).tobytes())
        return h.hexdigest()


def ellipse_mask(size: int, cy: float, cx: float, ry: float, rx: float, theta: float) -> np.ndarray:
    """Pixels whose centers fall inside the rotated ellipse (coordinates in pixels)."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    dy, dx = yy - cy, xx - cx
    c, s = np.cos(theta), np.sin(theta)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


def _smooth_phase(size: int, rng: np.random.Generator, order: int, amplitude: float) -> np.ndarray:
    t = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    yy, xx = np.meshgrid(t, t, indexing="ij")
    phase = np.zeros((size, size))
    for i in range(order + 1):
        for j in range(order + 1 - i):
            phase += rng.normal(0.0, 1.0) * xx**i * yy**j
    phase -= phase.mean()
    peak = np.abs(phase).max()
    if peak > 0:
        phase *= amplitude * rng.uniform(0.5, 1.0) / peak
    return phase


def generate_image(spec: PhantomSpec, index: int, with_roi: bool) -> tuple[np.ndarray, np.ndarray]:
    """One phantom and its label, a pure function of ``(spec.seed, index)``."""
    rng = np.random.default_rng([spec.seed, index])
    n = spec.size
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64) + 0.5
    mag = np.zeros((n, n))

    # body with a gentle intensity ramp
    by, bx = n / 2 + rng.uniform(-0.05, 0.05) * n, n / 2 + rng.uniform(-0.05, 0.05) * n
    body = ellipse_mask(n, by, bx, rng.uniform(0.38, 0.46) * n, rng.uniform(0.30, 0.42) * n, rng.uniform(-0.3, 0.3))
    ramp = 0.25 + 0.1 * ((yy - by) / n * rng.normal() + (xx - bx) / n * rng.normal())
    mag[body] = ramp[body]

    lo, hi = spec.ellipses
    for _ in range(int(rng.integers(lo, hi + 1))):
        cy, cx = by + rng.uniform(-0.25, 0.25) * n, bx + rng.uniform(-0.22, 0.22) * n
        m = ellipse_mask(n, cy, cx, rng.uniform(0.04, 0.14) * n, rng.uniform(0.04, 0.14) * n, rng.uniform(0, np.pi))
        mag[m & body] += rng.uniform(-0.15, 0.3)
    mag = np.clip(mag, 0.0, 0.6)

    label = np.zeros((n, n), dtype=np.uint8)
    if with_roi:
        for _ in range(1000):
            cy, cx = by + rng.uniform(-0.2, 0.2) * n, bx + rng.uniform(-0.18, 0.18) * n
            roi = ellipse_mask(n, cy, cx, rng.uniform(0.07, 0.13) * n, rng.uniform(0.07, 0.13) * n, rng.uniform(0, np.pi))
            roi &= body
            if roi.sum() >= 9:
                break
        else:
            raise RuntimeError(f"could not place a region of interest in phantom {index}")
        mag[roi] = 0.6 + 0.4 * spec.roi_contrast * rng.uniform(0.85, 1.0)
        label[roi] = 1

    peak = mag.max()
    mag = mag / peak * spec.intensity_scale if peak > 0 else mag
    phase = _smooth_phase(n, rng, spec.phase_order, spec.phase_amplitude)
    image = (mag * np.exp(1j * phase)).astype(np.complex64)
    return image, label


def generate_dataset(spec: PhantomSpec) -> Dataset:
    """Deterministic train/val/test phantoms for ``spec``.

    Within each split exactly ``round(roi_fraction · count)`` images carry a
    region of interest; which ones is fixed by the seed.
    """
    splits = {}
    offset = 0
    for name in SPLITS:
        count = int(spec.counts[name])
        selector = np.random.default_rng([spec.seed, 7919, SPLITS.index(name)])
        has_roi = np.zeros(count, dtype=bool)
        has_roi[selector.permutation(count)[: int(round(spec.roi_fraction * count))]] = True
        images = np.empty((count, spec.size, spec.size), np.complex64)
        labels = np.empty((count, spec.size, spec.size), np.uint8)
        ids = []
        for i in range(count):
            images[i], labels[i] = generate_image(spec, offset + i, bool(has_roi[i]))
            ids.append(f"{name}-{offset + i:05d}")
        splits[name] = Split(images, labels, ids, spec.intensity_scale)
        offset += count
    return Dataset(splits["train"], splits["val"], splits["test"], spec)


# -- serialization -----------------------------------------------------------------


def _sha(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def save_dataset(dataset: Dataset, path: str | Path) -> Path:
    """Write ``manifest.json`` plus per-image ``.c64`` (interleaved float32) and ``.u8`` label files."""
    root = Path(path)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": 1,
        "spec": dataset.spec.to_dict() if dataset.spec else None,
        "size": int(dataset.train.images.shape[-1]),
        "intensity_scale": dataset.train.intensity_scale,
        "splits": {},
        "hashes": {},
        "dataset_hash": dataset.content_hash(),
    }
    for name in SPLITS:
        split = dataset.split(name)
        manifest["splits"][name] = list(split.ids)
        for img, lab, ident in zip(split.images, split.labels, split.ids):
            inter = np.stack([img.real, img.imag], axis=-1).astype("<f4")
            inter.tofile(root / "images" / f"{ident}.c64")
            lab.astype(np.uint8).tofile(root / "labels" / f"{ident}.u8")
            manifest["hashes"][ident] = _sha(inter) + ":" + _sha(lab.astype(np.uint8))
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return root


def _read_exact(path: Path, dtype: str, count: int) -> np.ndarray:
    if not path.exists():
        raise DatasetError(f"dataset file {path} is missing")
    size = path.stat().st_size
    expected = count * np.dtype(dtype).itemsize
    if size != expected:
        raise DatasetError(f"dataset file {path} has {size} bytes, expected {expected}")
    return np.fromfile(path, dtype=dtype)


def load_dataset(path: str | Path) -> Dataset:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"no dataset manifest at {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_path}: malformed manifest ({exc})") from exc
    n = int(manifest["size"])
    scale = float(manifest.get("intensity_scale", 1.0))
    splits = {}
    for name in SPLITS:
        ids = manifest["splits"][name]
        images = np.empty((len(ids), n, n), np.complex64)
        labels = np.empty((len(ids), n, n), np.uint8)
        for i, ident in enumerate(ids):
            raw = _read_exact(root / "images" / f"{ident}.c64", "<f4", 2 * n * n).reshape(n, n, 2)
            images[i] = raw[..., 0] + 1j * raw[..., 1]
            labels[i] = _read_exact(root / "labels" / f"{ident}.u8", "u1", n * n).reshape(n, n)
        splits[name] = Split(images, labels, list(ids), scale)
    spec = PhantomSpec.from_dict(manifest["spec"]) if manifest.get("spec") else None
    return Dataset(splits["train"], splits["val"], splits["test"], spec)


def batch_iterator(
    split: Split, batch_size: int, seed: int | None = None, epoch: int = 0, shuffle: bool = True
) -> Iterator[np.ndarray]:
    """Yield index arrays; the order is a pure function of ``(seed, epoch)``.

    The final short batch is kept.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    n = len(split)
    order = np.arange(n)
    if shuffle:
        order = np.random.default_rng([0 if seed is None else seed, 104729, epoch]).permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]
