"""Reconstruction cascade, gated refinement U-Net, PatchGAN discriminator,
frozen perceptual feature extractor and segmentation U-Net."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import functional as F
from .autodiff import ops
from .autodiff.functional import ConfigurationError
from .autodiff.module import BatchNorm2d, Conv2d, ConvTranspose2d, Module, Parameter
from .autodiff.optim import init_gaussian, init_orthogonal, init_scalar, init_zeros
from .autodiff.tensor import Tensor, no_grad
from .kspace import KSpaceSample, data_consistency


# -- configs -------------------------------------------------------------------


@dataclass
class CascadeConfig:
    n_c: int = 3
    n_d: int = 3
    filters: int = 32
    kernel: int = 3
    dc_weight: float | None = None

    def __post_init__(self):
        if min(self.n_c, self.n_d, self.filters, self.kernel) < 1:
            raise ConfigurationError(f"CascadeConfig fields must be positive: {self}")
        if self.n_d < 2:
            raise ConfigurationError("each de-aliasing block needs at least 2 conv layers")
        if self.kernel % 2 == 0:
            raise ConfigurationError("cascade kernel must be odd to preserve image size")


@dataclass
class RefinerConfig:
    encoder: list = field(default_factory=lambda: [32, 64, 128])
    decoder: list = field(default_factory=lambda: [64, 32])
    kernel: int = 4
    slope: float = 0.1
    gate_init: float = 0.0

    def __post_init__(self):
        if len(self.decoder) != len(self.encoder) - 1:
            raise ConfigurationError("U-Net needs exactly one decoder stage fewer than encoder stages")


@dataclass
class DiscriminatorConfig:
    filters: list = field(default_factory=lambda: [32, 64, 128])
    kernel: int = 4
    stride: int = 2
    dropout: float = 0.2
    dropout_layers: int = 3
    slope: float = 0.2


@dataclass
class FeatureExtractorConfig:
    widths: list = field(default_factory=lambda: [16, 32, 64])
    kernel: int = 3
    stride: int = 2
    in_channels: int = 3
    slope: float = 0.1
    seed: int = 1234
    source: str = "seeded-random"


@dataclass
class SegmenterConfig:
    encoder: list = field(default_factory=lambda: [16, 32, 64])
    decoder: list = field(default_factory=lambda: [32, 16])
    kernel: int = 4
    slope: float = 0.1


PRESETS = {
    "paper": {
        "cascade": CascadeConfig(),
        "refiner": RefinerConfig(),
        "discriminator": DiscriminatorConfig(filters=[64, 128, 256, 512, 1024, 1024]),
        "features": FeatureExtractorConfig(),
        "segmenter": SegmenterConfig(),
    },
    "desk": {
        "cascade": CascadeConfig(),
        "refiner": RefinerConfig(),
        "discriminator": DiscriminatorConfig(),
        "features": FeatureExtractorConfig(),
        "segmenter": SegmenterConfig(),
    },
}


def preset(name: str, part: str):
    if name not in PRESETS:
        raise ConfigurationError(f"unknown architecture preset {name!r} (choose from {sorted(PRESETS)})")
    cfg = PRESETS[name][part]
    return type(cfg)(**asdict(cfg))


def config_dict(cfg) -> dict:
    return asdict(cfg)


# -- reconstruction cascade ----------------------------------------------------


class DealiasBlock(Module):
    def __init__(self, cfg: CascadeConfig):
        widths = [2] + [cfg.filters] * (cfg.n_d - 1) + [2]
        pad = cfg.kernel // 2
        self.convs = [Conv2d(a, b, cfg.kernel, 1, pad) for a, b in zip(widths[:-1], widths[1:])]

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for i, conv in enumerate(self.convs):
            h = conv(h)
            if i < len(self.convs) - 1:
                h = F.relu(h)
        return h


class Cascade(Module):
    """``n_c`` residual de-aliasing blocks, each followed by a DC layer."""

    def __init__(self, cfg: CascadeConfig | None = None):
        self.cfg = cfg or CascadeConfig()
        self.blocks = [DealiasBlock(self.cfg) for _ in range(self.cfg.n_c)]
        self.assign_names()

    def forward(self, x_u: Tensor, sample: KSpaceSample) -> Tensor:
        x = x_u
        for block in self.blocks:
            x = block(x) + x
            x = data_consistency(x, sample, self.cfg.dc_weight)
        return x

    def initialize(self, rng: np.random.Generator, std: float = 0.02) -> None:
        for name, p in self.named_parameters():
            if name.endswith("weight"):
                init_gaussian(p, rng, 0.0, std)
            else:
                init_zeros(p)


def reconstruct(cascade: Cascade, x_u: np.ndarray, sample: KSpaceSample) -> np.ndarray:
    """Run ``R`` on ``[B, 2, H, W]`` zero-filled channels without recording a graph."""
    with no_grad():
        return cascade(Tensor(x_u, dtype=cascade.blocks[0].convs[0].weight.dtype), sample).data


# -- U-Net -------------------------------------------------------------------------


class UNet(Module):
    """Strided-conv encoder, transposed-conv decoder, concatenated skips.

    Every encoder stage halves the resolution; input extents must be
    divisible by ``2 ** len(encoder)``.
    """

    def __init__(self, in_channels: int, out_channels: int, encoder, decoder, kernel: int = 4, slope: float = 0.1, out_activation: str = "identity"):
        if kernel % 2:
            raise ConfigurationError("U-Net kernel must be even for exact stride-2 resampling")
        pad = (kernel - 2) // 2
        self.slope = slope
        self.out_activation = out_activation
        self.depth = len(encoder)
        self.down = []
        self.down_bn = []
        prev = in_channels
        for i, w in enumerate(encoder):
            self.down.append(Conv2d(prev, w, kernel, 2, pad))
            self.down_bn.append(BatchNorm2d(w) if i > 0 else None)
            prev = w
        self.up = []
        self.up_bn = []
        skips = list(reversed(encoder[:-1]))
        for w, skip in zip(decoder, skips):
            self.up.append(ConvTranspose2d(prev, w, kernel, 2, pad))
            self.up_bn.append(BatchNorm2d(w))
            prev = w + skip
        self.head = ConvTranspose2d(prev, out_channels, kernel, 2, pad)

    def forward(self, x: Tensor) -> Tensor:
        factor = 2**self.depth
        if x.shape[2] % factor or x.shape[3] % factor:
            raise ConfigurationError(
                f"U-Net with {self.depth} stages needs extents divisible by {factor}, got {x.shape[2:]}"
            )
        skips = []
        h = x
        for conv, bn in zip(self.down, self.down_bn):
            h = conv(h)
            if bn is not None:
                h = bn(h)
            h = F.leaky_relu(h, self.slope)
            skips.append(h)
        skips.pop()
        for conv, bn in zip(self.up, self.up_bn):
            h = F.leaky_relu(bn(conv(h)), self.slope)
            h = ops.concat([h, skips.pop()], axis=1)
        return F.activation(self.head(h), self.out_activation)

    def initialize(self, rng: np.random.Generator, scheme: str = "orthogonal") -> None:
        for name, p in self.named_parameters():
            if name.endswith("weight"):
                if scheme == "orthogonal":
                    init_orthogonal(p, rng)
                else:
                    init_gaussian(p, rng, 0.0, 0.02)
            elif name.endswith("gamma"):
                init_scalar(p, 1.0)
            else:
                init_zeros(p)


# -- gated refinement ----------------------------------------------------------------


def unit_range(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-image ``(min, max)`` over both channels of ``[B, 2, H, W]``, shaped for broadcasting."""
    lo = x.min(axis=(1, 2, 3), keepdims=True)
    hi = x.max(axis=(1, 2, 3), keepdims=True)
    return lo, hi


def scale_to_unit(x: np.ndarray) -> np.ndarray:
    """Affine map of each image to ``[-1, 1]``; a constant image maps to zeros."""
    lo, hi = unit_range(x)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, 2.0 * (x - lo) / safe - 1.0, 0.0).astype(x.dtype)


class Refiner(Module):
    """``x_hat = scale_back(scale_to_unit(x_rec) + λ·unet(scale_to_unit(x_rec)))``.

    Written as ``x_rec + λ·x_V·(max - min)/2`` so that ``λ = 0`` returns
    ``x_rec`` bit for bit. The range is treated as a constant (no gradient).
    When ``x_rec`` requires grad the affine input map is differentiated too.
    """

    def __init__(self, cfg: RefinerConfig | None = None):
        self.cfg = cfg or RefinerConfig()
        self.unet = UNet(2, 2, self.cfg.encoder, self.cfg.decoder, self.cfg.kernel, self.cfg.slope, "tanh")
        self.gate = Parameter(np.full((1,), self.cfg.gate_init, np.float32))
        self.assign_names()

    def forward(self, x_rec: Tensor) -> tuple[Tensor, Tensor]:
        lo, hi = unit_range(x_rec.data)
        half_span = ((hi - lo) / 2.0).astype(x_rec.dtype)
        if x_rec.requires_grad:
            # joint training: let gradients reach R through the U-Net input too
            span = hi - lo
            inv = np.where(span > 0, 2.0 / np.where(span > 0, span, 1.0), 0.0).astype(x_rec.data.dtype)
            s = (x_rec - lo) * inv - Tensor(np.where(span > 0, 1.0, 0.0).astype(x_rec.data.dtype))
        else:
            s = Tensor(scale_to_unit(x_rec.data))
        x_v = self.unet(s)
        gate = self.gate.reshape(1, 1, 1, 1)
        x_hat = x_rec + (gate * x_v) * half_span
        return x_hat, x_v

    def initialize(self, rng: np.random.Generator) -> None:
        self.unet.initialize(rng, "orthogonal")
        init_scalar(self.gate, self.cfg.gate_init)


# -- discriminator -------------------------------------------------------------------


class Discriminator(Module):
    """PatchGAN: stride-2 conv stack, then a 3x3 conv to one sigmoid channel.

    Channelwise dropout follows the last ``dropout_layers`` conv layers.
    """

    def __init__(self, cfg: DiscriminatorConfig | None = None, in_channels: int = 2):
        self.cfg = cfg or DiscriminatorConfig()
        pad = (self.cfg.kernel - self.cfg.stride) // 2
        self.layers = []
        prev = in_channels
        for w in self.cfg.filters:
            self.layers.append(Conv2d(prev, w, self.cfg.kernel, self.cfg.stride, pad))
            prev = w
        self.head = Conv2d(prev, 1, 3, 1, 1)
        self.dropout_rng: np.random.Generator | None = None
        self.assign_names()

    def patch_extent(self, size: int) -> int:
        for _ in self.cfg.filters:
            if size % self.cfg.stride or size < self.cfg.stride:
                raise ConfigurationError(
                    f"discriminator: input extent too small or not divisible for {len(self.cfg.filters)} stride-{self.cfg.stride} layers"
                )
            size //= self.cfg.stride
        return size

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor, list[Tensor]]:
        self.patch_extent(x.shape[2])
        self.patch_extent(x.shape[3])
        features = []
        h = x
        first_dropout = len(self.layers) - self.cfg.dropout_layers
        for i, conv in enumerate(self.layers):
            h = F.leaky_relu(conv(h), self.cfg.slope)
            if i >= first_dropout and self.cfg.dropout > 0:
                h = F.channelwise_dropout(h, self.cfg.dropout, self.training, self.dropout_rng)
            features.append(h)
        patch = F.sigmoid(self.head(h))
        mean_prob = ops.mean(patch, axis=(1, 2, 3))
        return patch, mean_prob, features

    def initialize(self, rng: np.random.Generator, std: float = 0.02) -> None:
        for name, p in self.named_parameters():
            if name.endswith("weight"):
                init_gaussian(p, rng, 0.0, std)
            else:
                init_zeros(p)


# -- frozen feature extractor ------------------------------------------------------


class FeatureExtractorError(IOError):
    pass


class FeatureExtractor(Module):
    """Fixed conv stack applied to the replicated magnitude image.

    Default weights are orthogonal draws from ``cfg.seed``; ``load_weights``
    accepts an ``.npz`` with ``weight{i}``/``bias{i}`` arrays instead.
    Parameters never require gradients.
    """

    def __init__(self, cfg: FeatureExtractorConfig | None = None):
        self.cfg = cfg or FeatureExtractorConfig()
        pad = self.cfg.kernel // 2
        self.layers = []
        prev = self.cfg.in_channels
        for w in self.cfg.widths:
            self.layers.append(Conv2d(prev, w, self.cfg.kernel, self.cfg.stride, pad))
            prev = w
        self.assign_names()
        if self.cfg.source == "seeded-random":
            rng = np.random.default_rng(self.cfg.seed)
            for name, p in self.named_parameters():
                if name.endswith("weight"):
                    init_orthogonal(p, rng)
                else:
                    init_zeros(p)
        else:
            self.load_weights(self.cfg.source)
        self.requires_grad_(False)

    def load_weights(self, path: str | Path) -> None:
        try:
            data = np.load(path)
        except Exception as exc:  # noqa: BLE001
            raise FeatureExtractorError(f"cannot read feature-extractor weights {path}: {exc}") from exc
        for i, conv in enumerate(self.layers):
            for key, p in ((f"weight{i}", conv.weight), (f"bias{i}", conv.bias)):
                if key not in data:
                    raise FeatureExtractorError(f"{path}: missing array {key!r}")
                if data[key].shape != p.shape:
                    raise FeatureExtractorError(f"{path}: {key} has shape {data[key].shape}, expected {p.shape}")
                p.data = data[key].astype(p.dtype)

    def forward(self, x: Tensor) -> Tensor:
        mag = ops.magnitude(x)
        h = ops.concat([mag] * self.cfg.in_channels, axis=1) if self.cfg.in_channels > 1 else mag
        for conv in self.layers:
            h = F.leaky_relu(conv(h), self.cfg.slope)
        return h


def extract_features(extractor: FeatureExtractor, images: np.ndarray) -> np.ndarray:
    with no_grad():
        return extractor(Tensor(images)).data


# -- segmentation ----------------------------------------------------------------------


class Segmenter(Module):
    """U-Net on magnitude images producing per-pixel foreground probabilities."""

    def __init__(self, cfg: SegmenterConfig | None = None):
        self.cfg = cfg or SegmenterConfig()
        self.unet = UNet(1, 1, self.cfg.encoder, self.cfg.decoder, self.cfg.kernel, self.cfg.slope, "sigmoid")
        self.assign_names()

    def forward(self, magnitude: Tensor) -> Tensor:
        return self.unet(magnitude)

    def initialize(self, rng: np.random.Generator) -> None:
        self.unet.initialize(rng, "orthogonal")


def segment(segmenter: Segmenter, magnitudes: np.ndarray) -> np.ndarray:
    """Probability maps ``(B, H, W)`` for magnitude images ``(B, H, W)``."""
    mags = np.asarray(magnitudes, dtype=segmenter.unet.head.weight.dtype)
    was_training = segmenter.training
    segmenter.eval()
    try:
        with no_grad():
            return segmenter(Tensor(mags[:, None])).data[:, 0]
    finally:
        segmenter.train(was_training)


def binarize(prob: np.ndarray) -> np.ndarray:
    return (prob >= 0.5).astype(np.uint8)
