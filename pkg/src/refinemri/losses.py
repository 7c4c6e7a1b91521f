"""Training objectives for reconstruction, refinement and the discriminator,
the calibrated refinement loss, and the experience replay buffer.

All norms are per-element means so that calibration constants do not depend
on image or batch size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import ops
from .autodiff.functional import ShapeError
from .autodiff.tensor import Tensor, as_tensor

PROB_CLAMP = 1e-7


class CalibrationError(RuntimeError):
    """Loss calibration failed or was used in an invalid state."""


def _check_same(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def mse_loss(x, x_hat) -> Tensor:
    x, x_hat = as_tensor(x), as_tensor(x_hat)
    _check_same(x, x_hat, "mse_loss")
    return ops.mean(ops.square(x - x_hat))


def perceptual_loss(x, x_hat, extractor) -> Tensor:
    """Mean squared distance between frozen extractor features of both images."""
    fx = extractor(as_tensor(x))
    fy = extractor(as_tensor(x_hat))
    return ops.mean(ops.square(fx - fy))


def _clamped(p) -> Tensor:
    return ops.clip(as_tensor(p), PROB_CLAMP, 1.0 - PROB_CLAMP)


def discriminator_loss(d_real, d_fake, smoothing: float = 0.1) -> Tensor:
    """BCE with real target ``1 - smoothing`` and fake target 0.

    Each side is averaged over patches and batch; the two sides are summed.
    """
    pr, pf = _clamped(d_real), _clamped(d_fake)
    target = 1.0 - smoothing
    real_term = -(ops.log(pr) * target + ops.log(1.0 - pr) * (1.0 - target))
    fake_term = -ops.log(1.0 - pf)
    return ops.mean(real_term) + ops.mean(fake_term)


def adversarial_loss(d_fake) -> Tensor:
    return ops.mean(-ops.log(_clamped(d_fake)))


def feature_matching_loss(f_real, f_fake) -> Tensor:
    """Mean over layers of the per-element mean absolute feature difference."""
    f_real, f_fake = list(f_real), list(f_fake)
    if len(f_real) != len(f_fake) or not f_real:
        raise ShapeError(f"feature_matching_loss: {len(f_real)} real vs {len(f_fake)} fake feature maps")
    terms = []
    for i, (a, b) in enumerate(zip(f_real, f_fake)):
        a, b = as_tensor(a), as_tensor(b)
        if a.shape != b.shape:
            raise ShapeError(f"feature_matching_loss: layer {i} shapes {a.shape} and {b.shape} differ")
        terms.append(ops.mean(ops.abs(a - b)))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def l1_penalty(x_v) -> Tensor:
    """Mean absolute value of the ungated refinement output."""
    return ops.mean(ops.abs(as_tensor(x_v)))


@dataclass
class LossCalibration:
    """Normalizers for the refinement loss, fixed from the first iteration."""

    M: float = 1.0
    N: float = 1.0
    O: float = 1.0  # noqa: E741
    alpha: float = 0.0
    frozen: bool = False

    def to_dict(self) -> dict:
        return {"M": self.M, "N": self.N, "O": self.O, "alpha": self.alpha, "frozen": self.frozen}

    @classmethod
    def from_dict(cls, d: dict | None) -> "LossCalibration":
        return cls() if d is None else cls(**d)


def calibrate(adv: float, feat: float, vgg: float, pen: float, calib: LossCalibration | None = None, target_penalty: float = 0.1) -> LossCalibration:
    """Set ``M, N, O`` to the first-iteration loss values and ``α = target/pen``."""
    if calib is not None and calib.frozen:
        raise CalibrationError("loss calibration is frozen; it can only be set once")
    values = {"adv": adv, "feat": feat, "vgg": vgg, "pen": pen}
    for name, v in values.items():
        if not math.isfinite(v) or v <= 1e-12:
            raise CalibrationError(
                f"first-iteration {name} loss is {v!r}; calibration needs strictly positive values "
                "(try a different seed)"
            )
    out = calib or LossCalibration()
    out.M, out.N, out.O = float(adv), float(feat), float(vgg)
    out.alpha = float(target_penalty) / float(pen)
    out.frozen = True
    return out


def total_refiner_loss(adv, feat, vgg, pen, calib: LossCalibration):
    """``½(adv/M + feat/N) + vgg/O + α·pen``; works on tensors and floats."""
    if not calib.frozen:
        raise CalibrationError("total_refiner_loss used before calibration")
    return (adv * (1.0 / calib.M) + feat * (1.0 / calib.N)) * 0.5 + vgg * (1.0 / calib.O) + pen * calib.alpha


class ReplayBuffer:
    """Pool of past fakes mixed into discriminator batches.

    Every fresh fake is pushed (a uniformly random resident is evicted once
    the pool is full); then each slot of the returned batch is swapped for a
    random resident with probability ``p``.
    """

    def __init__(self, capacity: int = 80, p: float = 0.5, rng: np.random.Generator | None = None):
        if capacity < 1:
            raise ValueError("replay capacity must be positive")
        self.capacity = capacity
        self.p = p
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.items: list[np.ndarray] = []
        self.last_sources: np.ndarray = np.zeros(0, dtype=bool)

    def __len__(self) -> int:
        return len(self.items)

    def push(self, item: np.ndarray) -> None:
        item = np.array(item, copy=True)
        if len(self.items) < self.capacity:
            self.items.append(item)
        else:
            self.items[int(self.rng.integers(self.capacity))] = item

    def push_sample(self, fakes: np.ndarray) -> np.ndarray:
        """Push ``fakes`` (``[B, ...]``) and return the mixed discriminator batch."""
        fakes = np.asarray(fakes)
        had_items = len(self.items) > 0
        for f in fakes:
            self.push(f)
        out = fakes.copy()
        from_buffer = np.zeros(len(fakes), dtype=bool)
        if had_items:
            for i in range(len(fakes)):
                if self.rng.random() < self.p:
                    out[i] = self.items[int(self.rng.integers(len(self.items)))]
                    from_buffer[i] = True
        self.last_sources = from_buffer
        return out

    def state_arrays(self) -> np.ndarray:
        if not self.items:
            return np.zeros((0,), np.float32)
        return np.stack(self.items)

    def load_arrays(self, arr: np.ndarray) -> None:
        self.items = [a.copy() for a in arr] if arr.ndim > 1 else []
