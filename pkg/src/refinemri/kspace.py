"""Cartesian k-space simulation: centered unitary FFTs, 1D Gaussian line masks,
the acquisition model, zero-filled inversion and data consistency.

Images are complex numpy arrays shaped ``(..., H, W)``. Networks see the
same data as real ``[B, 2, H, W]`` tensors (real, imaginary channels); see
:func:`to_channels` / :func:`from_channels`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff.functional import ConfigurationError, ShapeError
from .autodiff.tensor import Tensor, make_node


@dataclass
class ComplexImage:
    """Single complex image with the peak intensity used for PSNR."""

    data: np.ndarray
    intensity_scale: float = 1.0

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise ShapeError(f"ComplexImage expects a 2D array, got shape {self.data.shape}")
        if not np.iscomplexobj(self.data):
            self.data = self.data.astype(np.complex64)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def real(self) -> np.ndarray:
        return self.data.real

    @property
    def imag(self) -> np.ndarray:
        return self.data.imag

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def to_channels(self) -> np.ndarray:
        return to_channels(self.data[None])[0]

    @classmethod
    def from_channels(cls, channels: np.ndarray, intensity_scale: float = 1.0) -> "ComplexImage":
        return cls(from_channels(np.asarray(channels)[None])[0], intensity_scale)

    def save(self, path: str | Path) -> None:
        save_complex(path, self.data, self.intensity_scale)

    @classmethod
    def load(cls, path: str | Path) -> "ComplexImage":
        data, scale = load_complex(path)
        return cls(data, scale)


def to_channels(images: np.ndarray) -> np.ndarray:
    """``(B, H, W)`` complex → ``(B, 2, H, W)`` real (same precision)."""
    images = np.asarray(images)
    real_dtype = np.float64 if images.dtype == np.complex128 else np.float32
    return np.stack([images.real, images.imag], axis=1).astype(real_dtype)


def from_channels(channels: np.ndarray) -> np.ndarray:
    """``(B, 2, H, W)`` real → ``(B, H, W)`` complex."""
    channels = np.asarray(channels)
    out = channels[:, 0] + 1j * channels[:, 1]
    return out.astype(np.complex128 if channels.dtype == np.float64 else np.complex64)


def fft2_centered(x: np.ndarray) -> np.ndarray:
    """Unitary 2D DFT over the last two axes with DC moved to the center."""
    x = np.asarray(x)
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(x, axes=(-2, -1)), norm="ortho"), axes=(-2, -1))


def ifft2_centered(k: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2_centered`."""
    k = np.asarray(k)
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(k, axes=(-2, -1)), norm="ortho"), axes=(-2, -1))


# -- masks -------------------------------------------------------------------


@dataclass
class SamplingMask:
    """Cartesian line mask: one keep flag per phase-encode column."""

    height: int
    width: int
    kept: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.kept = np.asarray(self.kept, dtype=bool)
        if self.kept.shape != (self.width,):
            raise ShapeError(f"mask has {self.kept.shape} column flags for width {self.width}")

    @property
    def sampling_ratio(self) -> float:
        return float(self.kept.sum()) / self.width

    @property
    def acceleration(self) -> float:
        return self.width / float(self.kept.sum())

    def as_array(self) -> np.ndarray:
        """Full ``(H, W)`` boolean mask."""
        return np.broadcast_to(self.kept, (self.height, self.width)).copy()

    def save(self, directory: str | Path, ratio: float | None = None) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "width": self.width,
            "height": self.height,
            "ratio": self.sampling_ratio if ratio is None else ratio,
            "seed": self.seed,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
        self.kept.astype(np.uint8).tofile(out / "columns.bin")

    @classmethod
    def load(cls, directory: str | Path) -> "SamplingMask":
        root = Path(directory)
        manifest = json.loads((root / "manifest.json").read_text())
        raw = np.fromfile(root / "columns.bin", dtype=np.uint8)
        if raw.size != manifest["width"]:
            raise ShapeError(f"{root / 'columns.bin'}: {raw.size} columns, manifest says {manifest['width']}")
        return cls(manifest["height"], manifest["width"], raw.astype(bool), manifest.get("seed"))


def center_band_size(width: int, budget: int) -> int:
    return min(budget, max(4, width // 32))


def generate_mask(
    width: int,
    height: int,
    ratio: float,
    rng: np.random.Generator,
    profile_std: float | None = None,
) -> SamplingMask:
    """Draw ``floor(ratio·width)`` distinct columns from a Gaussian profile.

    The profile is centered on the zero-frequency column ``width // 2`` with
    std ``width / 6``; the ``max(4, width // 32)`` columns closest to it are
    always kept (capped at the budget).
    """
    if not 0.0 < ratio <= 1.0:
        raise ConfigurationError(f"sampling ratio must lie in (0, 1], got {ratio}")
    budget = int(math.floor(ratio * width + 1e-9))
    if budget < 1:
        raise ConfigurationError(f"ratio {ratio} keeps no column of width {width}")
    center = width // 2
    cols = np.arange(width)
    dist = np.abs(cols - center)
    by_distance = np.lexsort((cols, dist))
    kept = np.zeros(width, dtype=bool)
    kept[by_distance[: center_band_size(width, budget)]] = True
    remaining = budget - int(kept.sum())
    if remaining > 0:
        std = profile_std if profile_std is not None else width / 6.0
        candidates = cols[~kept]
        weights = np.exp(-0.5 * ((candidates - center) / std) ** 2)
        chosen = rng.choice(candidates, size=remaining, replace=False, p=weights / weights.sum())
        kept[chosen] = True
    return SamplingMask(height, width, kept)


# -- acquisition ---------------------------------------------------------------


@dataclass
class KSpaceSample:
    """Undersampled measurements ``y`` (zero off the mask) for one or more images."""

    measurements: np.ndarray
    mask: np.ndarray
    noise_std: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.measurements.shape


def _mask_array(mask, shape) -> np.ndarray:
    if isinstance(mask, SamplingMask):
        mask = mask.as_array()
    mask = np.asarray(mask, dtype=bool)
    try:
        return np.broadcast_to(mask, shape)
    except ValueError as exc:
        raise ShapeError(f"mask shape {mask.shape} does not match images {shape}") from exc


def acquire(x: np.ndarray, mask, noise_std: float = 0.0, rng: np.random.Generator | None = None) -> KSpaceSample:
    """Simulate ``y = M ⊙ (F x + ε)`` with complex Gaussian ``ε`` of total std ``noise_std``."""
    x = np.asarray(x)
    m = _mask_array(mask, x.shape)
    k = fft2_centered(x)
    if noise_std > 0:
        if rng is None:
            raise ValueError("acquire with noise needs an rng stream")
        sigma = noise_std / math.sqrt(2.0)
        k = k + (rng.normal(0, sigma, x.shape) + 1j * rng.normal(0, sigma, x.shape)).astype(k.dtype)
    y = np.where(m, k, 0).astype(k.dtype)
    return KSpaceSample(y, m.copy(), float(noise_std))


def zero_fill(sample: KSpaceSample) -> np.ndarray:
    return ifft2_centered(np.where(sample.mask, sample.measurements, 0))


def data_consistency_array(x_net: np.ndarray, sample: KSpaceSample, dc_weight: float | None = None) -> np.ndarray:
    """Non-differentiable DC on complex arrays; see :func:`data_consistency`."""
    x_net = np.asarray(x_net)
    if x_net.shape != sample.measurements.shape:
        raise ShapeError(f"image shape {x_net.shape} does not match k-space {sample.measurements.shape}")
    k = fft2_centered(x_net)
    if dc_weight is None:
        k = np.where(sample.mask, sample.measurements, k)
    else:
        k = np.where(sample.mask, (k + dc_weight * sample.measurements) / (1.0 + dc_weight), k)
    return ifft2_centered(k)


def data_consistency(x: Tensor, sample: KSpaceSample, dc_weight: float | None = None) -> Tensor:
    """Replace the k-space of a ``[B, 2, H, W]`` tensor with ``y`` on the mask.

    ``dc_weight=None`` is hard replacement; a finite weight ``λ`` uses
    ``(k + λ·y) / (1 + λ)`` at sampled locations instead. The gradient is
    ``F^H diag(c) F`` with ``c = 0`` (or ``1/(1+λ)``) on the mask and ``1`` off it.
    """
    if x.ndim != 4 or x.shape[1] != 2:
        raise ShapeError(f"data_consistency expects [B, 2, H, W], got {x.shape}")
    if (x.shape[0],) + x.shape[2:] != sample.measurements.shape:
        raise ShapeError(f"tensor {x.shape} does not match k-space {sample.measurements.shape}")
    dtype = x.dtype
    cdtype = np.complex128 if dtype == np.float64 else np.complex64
    mask = sample.mask
    y = sample.measurements.astype(cdtype)
    k = fft2_centered(from_channels(x.data).astype(cdtype))
    if dc_weight is None:
        k = np.where(mask, y, k)
        keep = np.where(mask, 0.0, 1.0)
    else:
        k = np.where(mask, (k + dc_weight * y) / (1.0 + dc_weight), k)
        keep = np.where(mask, 1.0 / (1.0 + dc_weight), 1.0)
    out = to_channels(ifft2_centered(k).astype(cdtype)).astype(dtype)

    def backward(g):
        kg = fft2_centered(from_channels(g).astype(cdtype)) * keep
        return (to_channels(ifft2_centered(kg).astype(cdtype)).astype(dtype),)

    return make_node(out, (x,), backward)


# -- file formats ----------------------------------------------------------------


def save_complex(path: str | Path, data: np.ndarray, intensity_scale: float = 1.0) -> None:
    """Raw little-endian float32 interleaved (re, im) plus a ``.json`` sidecar."""
    path = Path(path)
    data = np.asarray(data)
    inter = np.stack([data.real, data.imag], axis=-1).astype("<f4")
    inter.tofile(path)
    sidecar = {"shape": list(data.shape), "intensity_scale": float(intensity_scale), "dtype": "float32-interleaved"}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True))


def load_complex(path: str | Path) -> tuple[np.ndarray, float]:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    shape = tuple(sidecar["shape"])
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != 2 * int(np.prod(shape)):
        raise ShapeError(f"{path}: {raw.size} floats, sidecar shape {shape} needs {2 * int(np.prod(shape))}")
    raw = raw.reshape(shape + (2,))
    return (raw[..., 0] + 1j * raw[..., 1]).astype(np.complex64), float(sidecar["intensity_scale"])
