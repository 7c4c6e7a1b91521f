import json
import math

import numpy as np
import pytest

from refinemri.autodiff import RngStreams
from refinemri.autodiff.checkpoint import load_arrays
from refinemri.evaluation import checkpoint_method, evaluate_method
from refinemri.networks import Cascade, preset
from refinemri.phantoms import PhantomSpec, generate_dataset
from refinemri.training import (
    STAGE_DEFAULTS,
    JointTrainer,
    RefineTrainer,
    TrainConfig,
    TrainingError,
    evaluation_batch,
    load_model,
    magnitude,
    params_hash,
    train_joint_ablation,
    train_segmenter,
    train_stage1,
    train_stage2,
)
from refinemri.metrics import psnr

TINY = PhantomSpec(size=32, counts={"train": 12, "val": 4, "test": 4}, seed=5)


@pytest.fixture(scope="module")
def tiny():
    return generate_dataset(TINY)


def cfg(stage, out, **kw):
    base = dict(stage=stage, epochs=1, batch_size=4, lr=1e-3, seed=11, out_dir=str(out))
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def stage1(tiny, tmp_path_factory):
    out = tmp_path_factory.mktemp("s1")
    train_stage1(cfg("recon", out, epochs=2), tiny)
    return out


def read_log(path):
    return [json.loads(line) for line in (path / "train_log.jsonl").read_text().splitlines()]


# -- configuration --------------------------------------------------------------------


def test_stage_defaults():
    assert (TrainConfig(stage="recon", preset="paper").epochs, TrainConfig(stage="recon", preset="paper").batch_size) == (1500, 20)
    assert (TrainConfig(stage="refine", preset="paper").epochs, TrainConfig(stage="refine", preset="paper").batch_size) == (200, 5)
    desk = TrainConfig(stage="refine")
    assert (desk.epochs, desk.batch_size) == (STAGE_DEFAULTS["desk"]["refine"]["epochs"], 8)
    assert TrainConfig(stage="recon", epochs=3).epochs == 3


def test_config_errors():
    with pytest.raises(TrainingError, match="stage"):
        TrainConfig(stage="pretrain")
    with pytest.raises(TrainingError, match="preset"):
        TrainConfig(preset="huge")
    with pytest.raises(TrainingError):
        TrainConfig(batch_size=0)
    with pytest.raises(TrainingError, match="bogus"):
        TrainConfig.from_dict({"stage": "recon", "bogus": 1})
    c = TrainConfig(stage="joint", epochs=2)
    assert TrainConfig.from_dict(c.to_dict()) == c


# -- stage 1 -----------------------------------------------------------------------------


def test_zero_epochs_checkpoint_is_initialization(tiny, tmp_path):
    train_stage1(cfg("recon", tmp_path, epochs=0), tiny)
    _, models, _ = load_model(tmp_path / "final")
    fresh = Cascade(preset("desk", "cascade"))
    fresh.initialize(RngStreams(11)["init"])
    assert params_hash(models["R"]) == params_hash(fresh)
    assert params_hash(load_model(tmp_path / "best")[1]["R"]) == params_hash(fresh)


def test_stage1_logs_and_checkpoints(stage1):
    log = read_log(stage1)
    steps = [r for r in log if not r.get("validation")]
    vals = [r for r in log if r.get("validation")]
    assert len(steps) == 6 and len(vals) == 2
    assert all(math.isfinite(r["mse"]) for r in steps)
    assert all("val_psnr" in r for r in vals)
    for name in ("best", "final", "state"):
        assert (stage1 / name / "manifest.json").exists()
    assert json.loads((stage1 / "config.json").read_text())["stage"] == "recon"


def test_non_finite_loss_aborts(tiny, tmp_path, monkeypatch):
    from refinemri.training import ReconTrainer

    monkeypatch.setattr(ReconTrainer, "train_step", lambda self, images, index: {"mse": float("nan")})
    with pytest.raises(TrainingError, match="non-finite mse"):
        train_stage1(cfg("recon", tmp_path), tiny)


@pytest.mark.slow
def test_stage1_overfits_small_set(tmp_path):
    data = generate_dataset(PhantomSpec(size=64, counts={"train": 8, "val": 1, "test": 1}, seed=2))
    trainer = train_stage1(cfg("recon", tmp_path, epochs=500, batch_size=8, lr=1e-3, log_every=50), data)
    split = data.train
    batch = evaluation_batch(split, np.arange(len(split)), 0.25, 1000)
    from refinemri.networks import reconstruct

    rec = reconstruct(trainer.R.eval(), batch.x_u, batch.sample)
    gt = magnitude(batch.gt)
    zf = np.mean([psnr(a, b) for a, b in zip(gt, magnitude(batch.x_u))])
    ours = np.mean([psnr(a, b) for a, b in zip(gt, magnitude(rec))])
    assert ours >= zf + 6.0, (zf, ours)


# -- stage 2 -----------------------------------------------------------------------------


def test_stage2_requires_stage1(tiny, tmp_path):
    with pytest.raises(TrainingError, match="not found"):
        RefineTrainer(cfg("refine", tmp_path), tiny, tmp_path / "nothing")


def test_stage2_keeps_R_frozen(tiny, stage1, tmp_path):
    before = params_hash(load_model(stage1 / "best")[1]["R"])
    train_stage2(cfg("refine", tmp_path), tiny, stage1 / "best")
    _, models, manifest = load_model(tmp_path / "final")
    assert params_hash(models["R"]) == before
    assert manifest["kind"] == "stage2"
    assert all(math.isfinite(v) for r in read_log(tmp_path) for k, v in r.items() if isinstance(v, float))


def test_initial_refinement_equals_stage1_metrics(tiny, stage1, tmp_path):
    train_stage2(cfg("refine", tmp_path, epochs=0), tiny, stage1 / "best")
    a, _ = checkpoint_method(stage1 / "best")
    b, _ = checkpoint_method(tmp_path / "final")
    ra = evaluate_method("m", a, tiny.test, 0.25, 1000)
    rb = evaluate_method("m", b, tiny.test, 0.25, 1000)
    assert ra.to_json() == rb.to_json()
    batch = evaluation_batch(tiny.test, np.arange(4), 0.25, 1000)
    assert np.array_equal(a(batch), b(batch))


def test_calibration_fixed_after_first_step(tiny, stage1, tmp_path):
    t = RefineTrainer(cfg("refine", tmp_path, epochs=2, max_steps=1), tiny, stage1 / "best")
    t.fit()
    first = t.first_step_parts
    c = t.calibration
    assert first["adv"] / c.M == 1.0 and first["feat"] / c.N == 1.0 and first["vgg"] / c.O == 1.0
    assert abs(c.alpha * first["pen"] - 0.1) <= 1e-12
    snapshot = c.to_dict()
    t.config.max_steps = None
    t.fit()
    assert t.global_step == 6
    assert t.calibration.to_dict() == snapshot
    _, _, manifest = load_model(tmp_path / "final")
    assert manifest["extra"]["calibration"] == snapshot


def test_joint_trains_both_networks(tiny, tmp_path):
    t = JointTrainer(cfg("joint", tmp_path, max_steps=2), tiny)
    r0, v0 = params_hash(t.R), params_hash(t.V)
    assert float(t.V.gate.data[0]) == 1.0
    t.fit()
    assert params_hash(t.R) != r0 and params_hash(t.V) != v0
    assert all(math.isfinite(r["total"]) for r in t.history)


# -- resumption --------------------------------------------------------------------------


def _runner(stage, tiny, stage1_dir):
    if stage == "recon":
        return lambda c, resume=False: train_stage1(c, tiny, resume)
    if stage == "refine":
        return lambda c, resume=False: train_stage2(c, tiny, stage1_dir / "best", resume)
    if stage == "joint":
        return lambda c, resume=False: train_joint_ablation(c, tiny, resume)
    return lambda c, resume=False: train_segmenter(c, tiny, resume)


@pytest.mark.parametrize("stage", ["recon", "refine", "joint", "segment"])
@pytest.mark.parametrize("cut", [2, 3])
def test_resume_is_bit_exact(stage, cut, tiny, stage1, tmp_path):
    run = _runner(stage, tiny, stage1)
    run(cfg(stage, tmp_path / "a", epochs=2))
    run(cfg(stage, tmp_path / "b", epochs=2, max_steps=cut))
    assert not (tmp_path / "b" / "final").exists()
    run(cfg(stage, tmp_path / "b", epochs=2), resume=True)
    assert (tmp_path / "a" / "train_log.jsonl").read_text() == (tmp_path / "b" / "train_log.jsonl").read_text()
    _, arrays_a = load_arrays(tmp_path / "a" / "final")
    _, arrays_b = load_arrays(tmp_path / "b" / "final")
    assert arrays_a.keys() == arrays_b.keys()
    for k in arrays_a:
        assert arrays_a[k].tobytes() == arrays_b[k].tobytes(), k


def test_resume_rejects_wrong_state(tiny, stage1, tmp_path):
    from refinemri.autodiff.checkpoint import CheckpointError
    from refinemri.training import SegmentTrainer

    t = SegmentTrainer(cfg("segment", tmp_path), tiny)
    with pytest.raises(CheckpointError):
        t.load_state(stage1 / "state")
