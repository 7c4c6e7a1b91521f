"""scikit-learn style wrappers around the trainers.

``X`` is always a stack of fully-sampled complex images ``(n, H, W)``;
undersampling is simulated with the estimator's ``ratio`` and per-row masks
drawn from ``mask_seed``, so ``predict`` is deterministic.
"""

from __future__ import annotations

import tempfile
from dataclasses import asdict

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .autodiff.checkpoint import save_checkpoint
from .autodiff.tensor import Tensor, no_grad
from .kspace import from_channels
from .metrics import dice, psnr
from .networks import binarize, segment
from .phantoms import Dataset, Split
from .training import (
    JointTrainer,
    ReconTrainer,
    RefineTrainer,
    SegmentTrainer,
    TrainConfig,
    evaluation_batch,
)


def check_images(X, name: str = "X") -> np.ndarray:
    """Validate a stack of square-or-rectangular 2D images ``(n, H, W)``."""
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ValueError(f"{name} must have shape (n, H, W), got {X.shape}")
    if X.shape[0] < 1:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return X.astype(np.complex64)


def check_masks(y, X: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != X.shape:
        raise ValueError(f"label masks {y.shape} do not match images {X.shape}")
    return (y > 0).astype(np.uint8)


def _as_split(X, y, prefix: str) -> Split:
    labels = np.zeros(X.shape, np.uint8) if y is None else y
    return Split(X, labels, [f"{prefix}-{i:05d}" for i in range(len(X))])


def _as_dataset(X, y, validation_fraction: float) -> Dataset:
    n_val = max(1, int(round(validation_fraction * len(X)))) if len(X) > 1 else 0
    n_train = len(X) - n_val
    train = _as_split(X[:n_train], None if y is None else y[:n_train], "train")
    val_idx = slice(n_train, None) if n_val else slice(0, None)
    val = _as_split(X[val_idx], None if y is None else y[val_idx], "val")
    return Dataset(train, val, val)


class _Base(BaseEstimator):
    def _config(self, stage: str) -> TrainConfig:
        return TrainConfig(
            stage=stage,
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            seed=self.seed,
            ratio=getattr(self, "ratio", 0.25),
            preset=self.preset,
            mask_seed=getattr(self, "mask_seed", 1000),
            out_dir=None,
        )

    def _batch(self, X):
        split = _as_split(X, None, "x")
        return evaluation_batch(split, np.arange(len(X)), self.ratio, self.mask_seed)

    def score(self, X, y=None) -> float:
        """Mean magnitude PSNR of the reconstructions against ``X``."""
        X = check_images(X)
        rec = np.abs(self.predict(X))
        return float(np.mean([psnr(a, b) for a, b in zip(np.abs(X), rec)]))


class CascadeReconstructor(TransformerMixin, _Base):
    """Stage-1 de-aliasing cascade trained with MSE."""

    def __init__(self, preset="desk", epochs=5, batch_size=8, lr=2e-4, ratio=0.25, seed=0, mask_seed=1000, validation_fraction=0.2):
        self.preset = preset
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.ratio = ratio
        self.seed = seed
        self.mask_seed = mask_seed
        self.validation_fraction = validation_fraction

    def fit(self, X, y=None):
        X = check_images(X)
        trainer = ReconTrainer(self._config("recon"), _as_dataset(X, None, self.validation_fraction))
        trainer.fit()
        self.network_ = trainer.R.eval()
        self.history_ = trainer.history
        self.n_features_in_ = X.shape[1] * X.shape[2]
        return self

    def _reconstruct(self, batch) -> np.ndarray:
        with no_grad():
            return self.network_(Tensor(batch.x_u), batch.sample).data

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = check_images(X)
        return from_channels(self._reconstruct(self._batch(X)))

    def transform(self, X) -> np.ndarray:
        """Magnitude of the reconstruction."""
        return np.abs(self.predict(X)).astype(np.float32)


class RefinedReconstructor(CascadeReconstructor):
    """Two-stage model: a fitted :class:`CascadeReconstructor` refined by the gated U-Net.

    With ``joint=True`` the cascade is ignored and both networks are trained
    together from scratch (the ablation).
    """

    def __init__(self, base=None, preset="desk", epochs=3, batch_size=8, lr=2e-4, ratio=0.25, seed=0, mask_seed=1000, validation_fraction=0.2, joint=False):
        super().__init__(preset, epochs, batch_size, lr, ratio, seed, mask_seed, validation_fraction)
        self.base = base
        self.joint = joint

    def fit(self, X, y=None):
        X = check_images(X)
        data = _as_dataset(X, None, self.validation_fraction)
        if self.joint:
            trainer = JointTrainer(self._config("joint"), data)
        else:
            if self.base is None:
                raise ValueError("RefinedReconstructor needs a fitted CascadeReconstructor as `base` (or joint=True)")
            check_is_fitted(self.base, "network_")
            with tempfile.TemporaryDirectory() as tmp:
                save_checkpoint(tmp, {"R": self.base.network_}, kind="stage1", config={"R": asdict(self.base.network_.cfg)})
                trainer = RefineTrainer(self._config("refine"), data, tmp)
        trainer.fit()
        self.network_ = trainer.R.eval()
        self.refiner_ = trainer.V.eval()
        self.calibration_ = trainer.calibration
        self.history_ = trainer.history
        self.n_features_in_ = X.shape[1] * X.shape[2]
        return self

    def _reconstruct(self, batch) -> np.ndarray:
        with no_grad():
            x_hat, _ = self.refiner_(self.network_(Tensor(batch.x_u), batch.sample))
        return x_hat.data


class RoiSegmenter(_Base):
    """U-Net segmenter on image magnitudes; ``y`` holds binary ROI masks."""

    def __init__(self, preset="desk", epochs=10, batch_size=8, lr=2e-4, seed=0, validation_fraction=0.2):
        self.preset = preset
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.validation_fraction = validation_fraction

    def fit(self, X, y):
        X = check_images(X)
        y = check_masks(y, X)
        trainer = SegmentTrainer(self._config("segment"), _as_dataset(X, y, self.validation_fraction))
        trainer.fit()
        self.network_ = trainer.S.eval()
        self.history_ = trainer.history
        self.n_features_in_ = X.shape[1] * X.shape[2]
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = check_images(X)
        return segment(self.network_, np.abs(X).astype(np.float32))

    def predict(self, X) -> np.ndarray:
        return binarize(self.predict_proba(X))

    def score(self, X, y) -> float:
        """Mean Dice over images whose label is non-empty."""
        X = check_images(X)
        y = check_masks(y, X)
        pred = self.predict(X)
        keep = y.reshape(len(y), -1).any(axis=1)
        return float(np.mean([dice(p, t) for p, t in zip(pred[keep], y[keep])]))
