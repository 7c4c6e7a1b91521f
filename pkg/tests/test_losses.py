import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from refinemri.autodiff import ShapeError, Tensor
from refinemri.losses import (
    CalibrationError,
    LossCalibration,
    ReplayBuffer,
    adversarial_loss,
    calibrate,
    discriminator_loss,
    feature_matching_loss,
    l1_penalty,
    mse_loss,
    perceptual_loss,
    total_refiner_loss,
)
from refinemri.networks import FeatureExtractor, extract_features

arrays = st.lists(st.floats(-10, 10), min_size=1, max_size=20).map(np.array)


def val(t):
    return float(t.data)


# -- mse / perceptual -------------------------------------------------------------


def test_mse_examples():
    assert val(mse_loss(np.zeros(2), np.zeros(2))) == 0
    assert val(mse_loss(np.zeros(2), np.ones(2))) == 1.0
    with pytest.raises(ShapeError):
        mse_loss(np.zeros(2), np.zeros(3))


@given(arrays, st.floats(-5, 5))
def test_mse_homogeneous(x, c):
    y = x[::-1].copy()
    assert val(mse_loss(c * x, c * y)) == pytest.approx(c * c * val(mse_loss(x, y)), rel=1e-9, abs=1e-12)


def test_perceptual_examples(rng):
    f = FeatureExtractor()
    x = rng.standard_normal((2, 2, 16, 16)).astype(np.float32)
    y = rng.standard_normal((2, 2, 16, 16)).astype(np.float32)
    assert val(perceptual_loss(x, x, f)) == 0
    assert val(perceptual_loss(x, y, f)) == pytest.approx(val(perceptual_loss(y, x, f)), rel=1e-7)
    expected = np.mean((extract_features(f, x).astype(np.float64) - extract_features(f, y)) ** 2)
    assert val(perceptual_loss(x, y, f)) == pytest.approx(expected, abs=1e-6)


# -- discriminator / adversarial ---------------------------------------------------


def test_discriminator_loss_examples():
    assert val(discriminator_loss(np.ones(3), np.zeros(3), smoothing=0.0)) == pytest.approx(0, abs=1e-6)
    assert val(discriminator_loss(np.full(3, 0.5), np.full(3, 0.5), smoothing=0.0)) == pytest.approx(2 * math.log(2), abs=1e-6)
    expected = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
    got = val(discriminator_loss(np.full(4, 0.9), np.zeros(4), smoothing=0.1))
    assert got == pytest.approx(expected, abs=1e-6)
    assert got == pytest.approx(0.3251, abs=1e-4)


def test_adversarial_loss_examples():
    assert val(adversarial_loss(np.ones(2))) == pytest.approx(0, abs=1e-6)
    assert val(adversarial_loss(np.full(2, 0.5))) == pytest.approx(math.log(2))
    assert val(adversarial_loss(np.zeros(2))) == pytest.approx(-math.log(1e-7), rel=1e-6)
    assert val(adversarial_loss(np.full(2, 1e-7))) == pytest.approx(16.118, abs=1e-3)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.lists(st.floats(0, 1), min_size=1, max_size=8))
def test_gan_losses_finite_and_nonnegative(real, fake):
    d = val(discriminator_loss(np.array(real), np.array(fake), smoothing=0.0))
    a = val(adversarial_loss(np.array(fake)))
    assert math.isfinite(d) and math.isfinite(a)
    assert d >= 0 and a >= 0


def test_clamped_gradient_is_finite():
    p = Tensor(np.array([0.0, 1.0, 0.5]), requires_grad=True, dtype=np.float64)
    discriminator_loss(p, p).backward()
    assert np.all(np.isfinite(p.grad))


# -- feature matching / penalty ----------------------------------------------------------


def test_feature_matching_examples():
    a = [np.ones((1, 2, 2)), np.zeros((3,))]
    assert val(feature_matching_loss(a, a)) == 0
    assert val(feature_matching_loss([np.array([1.0, 1.0])], [np.array([0.0, 2.0])])) == 1.0
    two = val(feature_matching_loss([np.array([1.0, 1.0])] * 2, [np.array([0.0, 2.0])] * 2))
    assert two == 1.0
    with pytest.raises(ShapeError):
        feature_matching_loss(a, a[:1])
    with pytest.raises(ShapeError):
        feature_matching_loss([np.zeros(2)], [np.zeros(3)])


def test_penalty_examples():
    assert val(l1_penalty(np.zeros(4))) == 0
    x = np.array([0.5, -0.5, 1.0, -1.0])
    assert val(l1_penalty(x)) == 0.75
    assert val(l1_penalty(-x)) == 0.75


# -- calibration and total ---------------------------------------------------------------


def test_calibration_examples():
    c = calibrate(0.7, 0.02, 5.0, 0.4)
    assert (c.M, c.N, c.O) == (0.7, 0.02, 5.0)
    assert c.alpha == pytest.approx(0.25)
    ones = calibrate(1, 1, 1, 1)
    assert (ones.M, ones.N, ones.O, ones.alpha) == (1, 1, 1, 0.1)
    with pytest.raises(CalibrationError, match="frozen"):
        calibrate(1, 1, 1, 1, ones)


def test_calibration_rejects_degenerate_values():
    for bad in (0.0, float("nan"), float("inf"), -1.0):
        with pytest.raises(CalibrationError):
            calibrate(1.0, bad, 1.0, 1.0)


def test_total_examples():
    parts = (0.7, 0.02, 5.0, 0.4)
    c = calibrate(*parts)
    assert total_refiner_loss(*parts, c) == pytest.approx(2.1)
    assert total_refiner_loss(0, 0, 0, 0, c) == 0
    assert total_refiner_loss(0.7, 0.02, 5.0, 0.8, c) - total_refiner_loss(*parts, c) == pytest.approx(c.alpha * 0.4)
    with pytest.raises(CalibrationError):
        total_refiner_loss(*parts, LossCalibration())


@given(st.tuples(*[st.floats(0.01, 10)] * 4))
def test_total_gradient_weights(first):
    c = calibrate(*first)
    parts = [Tensor(np.array(1.3), requires_grad=True, dtype=np.float64) for _ in range(4)]
    total_refiner_loss(*parts, c).backward()
    expected = [0.5 / c.M, 0.5 / c.N, 1.0 / c.O, c.alpha]
    for p, e in zip(parts, expected):
        assert float(p.grad) == pytest.approx(e, rel=1e-12)


def test_calibration_dict_round_trip():
    c = calibrate(0.7, 0.02, 5.0, 0.4)
    assert LossCalibration.from_dict(c.to_dict()) == c


# -- replay buffer ------------------------------------------------------------------------


def test_replay_first_batch_is_fresh():
    buf = ReplayBuffer(rng=np.random.default_rng(0))
    fakes = np.arange(8, dtype=float).reshape(4, 2)
    assert np.array_equal(buf.push_sample(fakes), fakes)
    assert not buf.last_sources.any()


def test_replay_capacity_saturates():
    buf = ReplayBuffer(80, rng=np.random.default_rng(0))
    for i in range(200):
        buf.push(np.full(3, i))
        assert len(buf) <= 80
    assert len(buf) == 80


def test_replay_draw_fraction():
    buf = ReplayBuffer(80, 0.5, np.random.default_rng(1))
    drawn = []
    for i in range(1251):
        buf.push_sample(np.full((8, 1), i, float))
        if i:
            drawn.append(buf.last_sources)
    frac = np.concatenate(drawn)[:10_000].mean()
    assert abs(frac - 0.5) <= 0.02


def test_replay_is_deterministic_and_round_trips():
    def run():
        buf = ReplayBuffer(5, 0.5, np.random.default_rng(3))
        outs = [buf.push_sample(np.full((2, 1), i, float)) for i in range(10)]
        return buf, np.concatenate(outs)

    a, oa = run()
    b, ob = run()
    assert np.array_equal(oa, ob)
    c = ReplayBuffer(5)
    c.load_arrays(a.state_arrays())
    assert np.array_equal(c.state_arrays(), a.state_arrays())
    empty = ReplayBuffer(5)
    empty.load_arrays(ReplayBuffer(5).state_arrays())
    assert len(empty) == 0
    with pytest.raises(ValueError):
        ReplayBuffer(0)
