"""Stage-1 reconstruction training, stage-2 adversarial/perceptual refinement,
the joint-training ablation, segmenter training, and resumable train state."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import losses as L
from .autodiff import functional as F
from .autodiff.checkpoint import (
    CheckpointError,
    extra_arrays,
    load_into,
    read_manifest,
    save_checkpoint,
)
from .autodiff.module import Module
from .autodiff.optim import Adam
from .autodiff.rng import RngStreams
from .autodiff.tensor import Tensor, no_grad
from .kspace import KSpaceSample, acquire, generate_mask, to_channels, zero_fill
from .metrics import dice, psnr
from .networks import (
    Cascade,
    CascadeConfig,
    Discriminator,
    DiscriminatorConfig,
    FeatureExtractor,
    FeatureExtractorConfig,
    Refiner,
    RefinerConfig,
    Segmenter,
    SegmenterConfig,
    binarize,
    preset,
    segment,
)
from .phantoms import Dataset, Split, batch_iterator

log = logging.getLogger(__name__)

STAGES = ("recon", "refine", "joint", "segment")

STAGE_DEFAULTS = {
    "paper": {
        "recon": {"epochs": 1500, "batch_size": 20},
        "refine": {"epochs": 200, "batch_size": 5},
        "joint": {"epochs": 1500, "batch_size": 20},
        "segment": {"epochs": 100, "batch_size": 20},
    },
    "desk": {
        "recon": {"epochs": 60, "batch_size": 8},
        "refine": {"epochs": 40, "batch_size": 8},
        "joint": {"epochs": 60, "batch_size": 8},
        "segment": {"epochs": 30, "batch_size": 8},
    },
}


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    stage: str = "recon"
    epochs: int | None = None
    batch_size: int | None = None
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    ratio: float = 0.25
    noise_std: float = 0.0
    preset: str = "desk"
    dataset: str | None = None
    out_dir: str | None = None
    smoothing: float = 0.1
    replay_capacity: int = 80
    replay_p: float = 0.5
    target_penalty: float = 0.1
    joint_gate_init: float = 1.0
    val_limit: int | None = None
    max_steps: int | None = None
    log_every: int = 1
    mask_seed: int = 1000

    def __post_init__(self):
        if self.stage not in STAGES:
            raise TrainingError(f"unknown stage {self.stage!r} (choose from {', '.join(STAGES)})")
        if self.preset not in STAGE_DEFAULTS:
            raise TrainingError(f"unknown preset {self.preset!r}")
        defaults = STAGE_DEFAULTS[self.preset][self.stage]
        if self.epochs is None:
            self.epochs = defaults["epochs"]
        if self.batch_size is None:
            self.batch_size = defaults["batch_size"]
        if self.epochs < 0 or self.batch_size < 1:
            raise TrainingError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise TrainingError(f"unknown training option(s): {', '.join(sorted(unknown))}")
        return cls(**d)


# -- simulated acquisitions --------------------------------------------------------


@dataclass
class Batch:
    gt: np.ndarray  # [B, 2, H, W]
    x_u: np.ndarray  # [B, 2, H, W]
    sample: KSpaceSample
    labels: np.ndarray | None = None


def simulate_batch(images: np.ndarray, ratio: float, noise_std: float, mask_rngs, noise_rng=None) -> Batch:
    """Undersample each image with its own Gaussian line mask.

    ``mask_rngs`` is one generator for the whole batch or a list with one
    generator per image.
    """
    images = np.asarray(images)
    b, h, w = images.shape
    if isinstance(mask_rngs, np.random.Generator):
        mask_rngs = [mask_rngs] * b
    masks = np.stack([generate_mask(w, h, ratio, r).as_array() for r in mask_rngs])
    sample = acquire(images, masks, noise_std, noise_rng)
    return Batch(to_channels(images), to_channels(zero_fill(sample)), sample)


def mask_rng_for(image_id: str, mask_seed: int) -> np.random.Generator:
    """Fixed per-image evaluation mask stream (shared by every method)."""
    return np.random.default_rng([int(mask_seed), zlib.crc32(str(image_id).encode())])


def evaluation_batch(split: Split, index, ratio: float, mask_seed: int, noise_std: float = 0.0) -> Batch:
    index = np.asarray(index)
    rngs = [mask_rng_for(split.ids[i], mask_seed) for i in index]
    noise_rng = np.random.default_rng([int(mask_seed), 1]) if noise_std > 0 else None
    batch = simulate_batch(split.images[index], ratio, noise_std, rngs, noise_rng)
    batch.labels = split.labels[index]
    return batch


def magnitude(channels: np.ndarray) -> np.ndarray:
    return np.sqrt(channels[:, 0].astype(np.float64) ** 2 + channels[:, 1].astype(np.float64) ** 2)


def params_hash(module: Module) -> str:
    h = hashlib.sha256()
    for name, p in module.named_parameters():
        h.update(name.encode())
        h.update(np.ascontiguousarray(p.data).tobytes())
    return h.hexdigest()


# -- checkpoints of trained models ------------------------------------------------------


def save_model(directory, kind: str, modules: dict, configs: dict, extra: dict | None = None) -> Path:
    return save_checkpoint(directory, modules, kind=kind, config=configs, extra=extra or {})


def build_models(kind: str, configs: dict) -> dict[str, Module]:
    models = {}
    if "R" in configs:
        models["R"] = Cascade(CascadeConfig(**configs["R"]))
    if "V" in configs:
        models["V"] = Refiner(RefinerConfig(**configs["V"]))
    if "D" in configs:
        models["D"] = Discriminator(DiscriminatorConfig(**configs["D"]))
    if "S" in configs:
        models["S"] = Segmenter(SegmenterConfig(**configs["S"]))
    return models


def load_model(directory) -> tuple[str, dict[str, Module], dict]:
    """Rebuild the networks stored in a model checkpoint; returns ``(kind, models, manifest)``."""
    manifest = read_manifest(directory)
    models = build_models(manifest["kind"], manifest["config"])
    load_into(directory, models)
    for m in models.values():
        m.eval()
    return manifest["kind"], models, manifest


# -- trainer base ------------------------------------------------------------------------


class Trainer:
    """Epoch/batch loop with JSON-lines logging and exact resumption.

    Subclasses define ``models``/``optimizers`` in ``setup`` and implement
    ``train_step`` and ``validate``.
    """

    kind = "base"

    def __init__(self, config: TrainConfig, dataset: Dataset):
        self.config = config
        self.dataset = dataset
        self.streams = RngStreams(config.seed)
        self.out_dir = Path(config.out_dir) if config.out_dir else None
        self.epoch = 0
        self.batch_index = 0
        self.global_step = 0
        self.history: list[dict] = []
        self.best_score: float | None = None
        self.best_path: Path | None = None
        self.models: dict[str, Module] = {}
        self.optimizers: dict[str, Adam] = {}
        self.setup()

    # hooks
    def setup(self) -> None:
        raise NotImplementedError

    def train_step(self, batch_images: np.ndarray, index: np.ndarray) -> dict:
        raise NotImplementedError

    def validate(self) -> dict:
        return {}

    def is_better(self, val: dict) -> bool:
        return False

    def model_configs(self) -> dict:
        raise NotImplementedError

    def trainable_modules(self) -> dict[str, Module]:
        return self.models

    def extra_state(self) -> dict:
        return {}

    def load_extra_state(self, extra: dict, arrays: dict) -> None:
        pass

    def extra_arrays(self) -> dict:
        return {}

    # helpers
    def adam(self, params) -> Adam:
        c = self.config
        return Adam(params, c.lr, c.beta1, c.beta2, c.eps)

    def _log(self, record: dict) -> None:
        self.history.append(record)
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            with open(self.out_dir / "train_log.jsonl", "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def val_split(self) -> Split:
        split = self.dataset.val
        if self.config.val_limit is not None and self.config.val_limit < len(split):
            split = split.subset(np.arange(self.config.val_limit))
        return split

    # state
    def save_state(self, directory=None) -> Path:
        directory = Path(directory) if directory else self.out_dir / "state"
        extra = {
            "epoch": self.epoch,
            "batch_index": self.batch_index,
            "global_step": self.global_step,
            "best_score": self.best_score,
            "config": self.config.to_dict(),
            "kind": self.kind,
            **self.extra_state(),
        }
        return save_checkpoint(
            directory,
            self.models,
            kind="train-state",
            config=self.model_configs(),
            rng_state=self.streams.get_state(),
            extra=extra,
            arrays=self.extra_arrays(),
            optimizer_state=True,
        )

    def load_state(self, directory) -> None:
        manifest = load_into(directory, self.models, optimizer_state=True)
        if manifest["kind"] != "train-state" or manifest["extra"].get("kind") != self.kind:
            raise CheckpointError(f"{directory} is not a {self.kind} training state")
        extra = manifest["extra"]
        self.epoch = int(extra["epoch"])
        self.batch_index = int(extra["batch_index"])
        self.global_step = int(extra["global_step"])
        self.best_score = extra.get("best_score")
        self.streams.set_state(manifest["rng_state"])
        self.load_extra_state(extra, extra_arrays(directory))
        if self.out_dir is not None and (self.out_dir / "best").exists():
            self.best_path = self.out_dir / "best"

    def save_model(self, directory) -> Path:
        return save_model(directory, self.kind, self.models_to_save(), self.model_configs(), self.model_extra())

    def models_to_save(self) -> dict[str, Module]:
        return self.models

    def model_extra(self) -> dict:
        return {"epoch": self.epoch, "global_step": self.global_step, "seed": self.config.seed}

    # loop
    def fit(self) -> "Trainer":
        """Run until ``config.epochs`` are complete or ``config.max_steps`` steps were taken."""
        c = self.config
        train = self.dataset.train
        while self.epoch < c.epochs:
            for m in self.trainable_modules().values():
                m.train()
            batches = list(batch_iterator(train, c.batch_size, seed=c.seed, epoch=self.epoch))
            while self.batch_index < len(batches):
                if c.max_steps is not None and self.global_step >= c.max_steps:
                    if self.out_dir is not None:
                        self.save_state()
                    return self
                index = batches[self.batch_index]
                parts = self.train_step(train.images[index], index)
                self.batch_index += 1
                self.global_step += 1
                for k, v in parts.items():
                    if not math.isfinite(v):
                        raise TrainingError(f"non-finite {k} loss at step {self.global_step}")
                if self.global_step % c.log_every == 0:
                    self._log({"stage": c.stage, "epoch": self.epoch, "step": self.global_step, **parts})
            self.batch_index = 0
            self.epoch += 1
            val = self.validate()
            improved = self.is_better(val)
            self._log({"stage": c.stage, "epoch": self.epoch, "step": self.global_step, "validation": True, **val})
            if self.out_dir is not None:
                if improved:
                    self.best_path = self.save_model(self.out_dir / "best")
                self.save_state()
        if self.out_dir is not None:
            self.save_model(self.out_dir / "final")
            if self.best_path is None:
                self.best_path = self.save_model(self.out_dir / "best")
            (self.out_dir / "config.json").write_text(json.dumps(self.config.to_dict(), indent=1, sort_keys=True))
        return self


# -- stage 1 --------------------------------------------------------------------------------


class ReconTrainer(Trainer):
    """Trains the cascade ``R`` with the MSE loss."""

    kind = "stage1"

    def setup(self) -> None:
        self.R = Cascade(preset(self.config.preset, "cascade"))
        self.R.initialize(self.streams["init"])
        self.models = {"R": self.R}
        self.opt = self.adam(self.R.parameters())

    def model_configs(self) -> dict:
        return {"R": asdict(self.R.cfg)}

    def train_step(self, images, index) -> dict:
        c = self.config
        batch = simulate_batch(images, c.ratio, c.noise_std, self.streams["masks"], self.streams["noise"])
        self.opt.zero_grad()
        out = self.R(Tensor(batch.x_u), batch.sample)
        loss = L.mse_loss(batch.gt, out)
        loss.backward()
        self.opt.step()
        return {"mse": loss.item()}

    def validate(self) -> dict:
        split = self.val_split()
        values = []
        for index in batch_iterator(split, 16, shuffle=False):
            batch = evaluation_batch(split, index, self.config.ratio, self.config.mask_seed)
            with no_grad():
                rec = self.R(Tensor(batch.x_u), batch.sample).data
            values += [psnr(a, b, split.intensity_scale) for a, b in zip(magnitude(batch.gt), magnitude(rec))]
        return {"val_psnr": float(np.mean(values))}

    def is_better(self, val: dict) -> bool:
        if self.best_score is None or val["val_psnr"] > self.best_score:
            self.best_score = val["val_psnr"]
            return True
        return False


def train_stage1(config: TrainConfig, dataset: Dataset, resume: bool = False) -> ReconTrainer:
    trainer = ReconTrainer(config, dataset)
    if resume:
        trainer.load_state(Path(config.out_dir) / "state")
    return trainer.fit()


# -- stage 2 and joint ablation ------------------------------------------------------------------


class _AdversarialMixin:
    """Shared discriminator step and visual-loss evaluation."""

    def _init_adversarial(self) -> None:
        c = self.config
        self.D = Discriminator(preset(c.preset, "discriminator"))
        self.D.initialize(self.streams["init"])
        self.D.dropout_rng = self.streams["dropout"]
        self.features = FeatureExtractor(preset(c.preset, "features"))
        self.opt_D = self.adam(self.D.parameters())
        self.replay = L.ReplayBuffer(c.replay_capacity, c.replay_p, self.streams["replay"])
        self.calibration = L.LossCalibration()
        self.first_step_parts: dict | None = None

    def discriminator_step(self, gt: np.ndarray, fakes: np.ndarray) -> float:
        mixed = self.replay.push_sample(fakes)
        self.D.train()
        self.D.requires_grad_(True)
        self.opt_D.zero_grad()
        p_real, _, _ = self.D(Tensor(gt))
        p_fake, _, _ = self.D(Tensor(mixed))
        loss = L.discriminator_loss(p_real, p_fake, self.config.smoothing)
        loss.backward()
        self.opt_D.step()
        return loss.item()

    def visual_parts(self, gt: np.ndarray, x_hat: Tensor, x_v: Tensor) -> dict:
        """Adversarial, feature-matching, perceptual and penalty terms (D frozen, eval mode)."""
        self.D.eval()
        self.D.requires_grad_(False)
        with no_grad():
            _, _, f_real = self.D(Tensor(gt))
        p_fake, _, f_fake = self.D(x_hat)
        return {
            "adv": L.adversarial_loss(p_fake),
            "feat": L.feature_matching_loss(f_real, f_fake),
            "vgg": L.perceptual_loss(Tensor(gt), x_hat, self.features),
            "pen": L.l1_penalty(x_v),
        }

    def refiner_objective(self, parts: dict):
        if not self.calibration.frozen:
            values = {k: v.item() for k, v in parts.items()}
            L.calibrate(values["adv"], values["feat"], values["vgg"], values["pen"], self.calibration, self.config.target_penalty)
            self.first_step_parts = values
            log.info("calibrated refinement loss: %s", self.calibration.to_dict())
        return L.total_refiner_loss(parts["adv"], parts["feat"], parts["vgg"], parts["pen"], self.calibration)

    def extra_state(self) -> dict:
        return {"calibration": self.calibration.to_dict(), "first_step_parts": self.first_step_parts}

    def load_extra_state(self, extra: dict, arrays: dict) -> None:
        self.calibration = L.LossCalibration.from_dict(extra.get("calibration"))
        self.first_step_parts = extra.get("first_step_parts")
        self.replay.rng = self.streams["replay"]
        self.D.dropout_rng = self.streams["dropout"]
        self.replay.load_arrays(arrays.get("replay", np.zeros(0)))

    def extra_arrays(self) -> dict:
        return {"replay": self.replay.state_arrays()}

    def model_extra(self) -> dict:
        return {**super().model_extra(), "calibration": self.calibration.to_dict()}

    def validate_visual(self, recon_fn) -> dict:
        """Mean PSNR and calibrated total loss on the validation split."""
        split = self.val_split()
        psnrs, totals = [], []
        for m in self.trainable_modules().values():
            m.eval()
        for index in batch_iterator(split, 16, shuffle=False):
            batch = evaluation_batch(split, index, self.config.ratio, self.config.mask_seed)
            with no_grad():
                x_hat, x_v = recon_fn(batch)
                if self.calibration.frozen:
                    parts = self.visual_parts(batch.gt, x_hat, x_v)
                    totals.append(L.total_refiner_loss(*(parts[k].item() for k in ("adv", "feat", "vgg", "pen")), self.calibration))
            psnrs += [psnr(a, b, split.intensity_scale) for a, b in zip(magnitude(batch.gt), magnitude(x_hat.data))]
        out = {"val_psnr": float(np.mean(psnrs))}
        if totals:
            out["val_total"] = float(np.mean(totals))
        return out


class RefineTrainer(_AdversarialMixin, Trainer):
    """Trains the gated refiner ``V`` (and ``D``) on top of a frozen ``R``."""

    kind = "stage2"

    def __init__(self, config: TrainConfig, dataset: Dataset, stage1_ckpt):
        self.stage1_ckpt = stage1_ckpt
        super().__init__(config, dataset)

    def setup(self) -> None:
        if self.stage1_ckpt is None or not (Path(self.stage1_ckpt) / "manifest.json").exists():
            raise TrainingError(f"stage-1 checkpoint not found: {self.stage1_ckpt}")
        kind, models, _ = load_model(self.stage1_ckpt)
        if "R" not in models:
            raise TrainingError(f"{self.stage1_ckpt} holds no reconstruction network")
        self.R = models["R"].eval().requires_grad_(False)
        self.R_hash = params_hash(self.R)
        self.V = Refiner(preset(self.config.preset, "refiner"))
        self.V.initialize(self.streams["init"])
        self._init_adversarial()
        self.models = {"R": self.R, "V": self.V, "D": self.D}
        self.opt_V = self.adam(self.V.parameters())

    def trainable_modules(self) -> dict[str, Module]:
        return {"V": self.V, "D": self.D}

    def model_configs(self) -> dict:
        return {"R": asdict(self.R.cfg), "V": asdict(self.V.cfg), "D": asdict(self.D.cfg)}

    def reconstruct(self, x_u: np.ndarray, sample: KSpaceSample) -> np.ndarray:
        with no_grad():
            return self.R(Tensor(x_u), sample).data

    def train_step(self, images, index) -> dict:
        c = self.config
        batch = simulate_batch(images, c.ratio, c.noise_std, self.streams["masks"], self.streams["noise"])
        x_rec = Tensor(self.reconstruct(batch.x_u, batch.sample))
        self.V.train()
        with no_grad():
            x_hat_d, _ = self.V(x_rec)
        d_loss = self.discriminator_step(batch.gt, x_hat_d.data)

        self.V.train()
        self.opt_V.zero_grad()
        x_hat, x_v = self.V(x_rec)
        parts = self.visual_parts(batch.gt, x_hat, x_v)
        total = self.refiner_objective(parts)
        total.backward()
        self.opt_V.step()
        return {"d_loss": d_loss, "total": total.item(), "gate": float(self.V.gate.data[0]), **{k: v.item() for k, v in parts.items()}}

    def validate(self) -> dict:
        def recon(batch):
            return self.V(Tensor(self.reconstruct(batch.x_u, batch.sample)))

        return self.validate_visual(recon)

    def is_better(self, val: dict) -> bool:
        score = val.get("val_total")
        if score is None:
            return False
        if self.best_score is None or score < self.best_score:
            self.best_score = score
            return True
        return False

    def fit(self) -> "RefineTrainer":
        super().fit()
        if params_hash(self.R) != self.R_hash:
            raise TrainingError("reconstruction network changed during stage 2")
        return self


def train_stage2(config: TrainConfig, dataset: Dataset, stage1_ckpt, resume: bool = False) -> RefineTrainer:
    trainer = RefineTrainer(config, dataset, stage1_ckpt)
    if resume:
        trainer.load_state(Path(config.out_dir) / "state")
    return trainer.fit()


class JointTrainer(_AdversarialMixin, Trainer):
    """Ablation: ``R`` and ``V`` trained together on MSE plus the visual loss."""

    kind = "joint"

    def setup(self) -> None:
        c = self.config
        self.R = Cascade(preset(c.preset, "cascade"))
        self.R.initialize(self.streams["init"])
        vcfg = preset(c.preset, "refiner")
        vcfg.gate_init = c.joint_gate_init
        self.V = Refiner(vcfg)
        self.V.initialize(self.streams["init"])
        self._init_adversarial()
        self.models = {"R": self.R, "V": self.V, "D": self.D}
        self.opt_G = self.adam(self.R.parameters() + self.V.parameters())

    def trainable_modules(self) -> dict[str, Module]:
        return self.models

    def model_configs(self) -> dict:
        return {"R": asdict(self.R.cfg), "V": asdict(self.V.cfg), "D": asdict(self.D.cfg)}

    def train_step(self, images, index) -> dict:
        c = self.config
        batch = simulate_batch(images, c.ratio, c.noise_std, self.streams["masks"], self.streams["noise"])
        self.R.train()
        self.V.train()
        with no_grad():
            x_hat_d, _ = self.V(self.R(Tensor(batch.x_u), batch.sample))
        d_loss = self.discriminator_step(batch.gt, x_hat_d.data)

        self.opt_G.zero_grad()
        x_rec = self.R(Tensor(batch.x_u), batch.sample)
        x_hat, x_v = self.V(x_rec)
        parts = self.visual_parts(batch.gt, x_hat, x_v)
        mse = L.mse_loss(batch.gt, x_hat)
        total = mse + self.refiner_objective(parts)
        total.backward()
        self.opt_G.step()
        return {"d_loss": d_loss, "mse": mse.item(), "total": total.item(), "gate": float(self.V.gate.data[0]), **{k: v.item() for k, v in parts.items()}}

    def validate(self) -> dict:
        def recon(batch):
            return self.V(self.R(Tensor(batch.x_u), batch.sample))

        return self.validate_visual(recon)

    def is_better(self, val: dict) -> bool:
        if self.best_score is None or val["val_psnr"] > self.best_score:
            self.best_score = val["val_psnr"]
            return True
        return False


def train_joint_ablation(config: TrainConfig, dataset: Dataset, resume: bool = False) -> JointTrainer:
    trainer = JointTrainer(config, dataset)
    if resume:
        trainer.load_state(Path(config.out_dir) / "state")
    return trainer.fit()


# -- segmenter -----------------------------------------------------------------------------------


class SegmentTrainer(Trainer):
    """Pixelwise BCE training of the segmentation U-Net on fully-sampled magnitudes."""

    kind = "segmenter"

    def setup(self) -> None:
        self.S = Segmenter(preset(self.config.preset, "segmenter"))
        self.S.initialize(self.streams["init"])
        self.models = {"S": self.S}
        self.opt = self.adam(self.S.parameters())

    def model_configs(self) -> dict:
        return {"S": asdict(self.S.cfg)}

    def train_step(self, images, index) -> dict:
        labels = self.dataset.train.labels[index].astype(np.float32)
        mags = np.abs(images).astype(np.float32)[:, None]
        self.opt.zero_grad()
        prob = self.S(Tensor(mags))
        loss = F.binary_cross_entropy(prob, labels[:, None])
        loss.backward()
        self.opt.step()
        return {"bce": loss.item()}

    def validate(self) -> dict:
        split = self.val_split()
        pred = binarize(segment(self.S, np.abs(split.images)))
        keep = split.labels.reshape(len(split), -1).any(axis=1)
        scores = [dice(p, t) for p, t, k in zip(pred, split.labels, keep) if k]
        return {"val_dice": float(np.mean(scores))}

    def is_better(self, val: dict) -> bool:
        if self.best_score is None or val["val_dice"] > self.best_score:
            self.best_score = val["val_dice"]
            return True
        return False


def train_segmenter(config: TrainConfig, dataset: Dataset, resume: bool = False) -> SegmentTrainer:
    trainer = SegmentTrainer(config, dataset)
    if resume:
        trainer.load_state(Path(config.out_dir) / "state")
    return trainer.fit()


TRAINERS = {"recon": ReconTrainer, "joint": JointTrainer, "segment": SegmentTrainer}
