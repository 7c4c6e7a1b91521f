import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dice_ref, psnr_ref, ssim_ref
from refinemri.autodiff import ShapeError
from refinemri.metrics import (
    MetricError,
    aggregate_report,
    dice,
    psnr,
    read_report,
    sis,
    sis_from_dice,
    ssim,
)


def test_psnr_examples():
    x = np.random.default_rng(0).random((8, 8))
    assert psnr(x, x) == math.inf
    assert psnr(np.zeros((4, 4)), np.full((4, 4), 0.1)) == pytest.approx(20.0)
    assert psnr(np.zeros((4, 4)), np.full((4, 4), 0.2), peak=2.0) == pytest.approx(20.0)
    with pytest.raises(ShapeError):
        psnr(np.zeros(3), np.zeros(4))


def test_psnr_decreases_with_noise(rng):
    x = rng.random((32, 32))
    n = rng.standard_normal(x.shape)
    values = [psnr(x, x + s * n) for s in (0.01, 0.02, 0.05, 0.1, 0.2)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_ssim_examples():
    x = np.random.default_rng(1).random((16, 16))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    c1 = 0.01**2
    assert ssim(np.zeros((16, 16)), np.ones((16, 16))) == pytest.approx(c1 / (1 + c1), rel=1e-9)
    with pytest.raises(MetricError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))
    with pytest.raises(MetricError):
        ssim(x, x, window="triangle")


def test_ssim_block_window_on_constant_blocks():
    # 8x8 constant blocks: every variance is zero so only the luminance term is left
    x = np.zeros((16, 16))
    y = np.full((16, 16), 0.5)
    c1 = 0.01**2
    assert ssim(x, y, window="block") == pytest.approx(c1 / (0.25 + c1))


@given(st.integers(0, 10_000))
def test_ssim_symmetric(seed):
    r = np.random.default_rng(seed)
    x, y = r.random((12, 12)), r.random((12, 12))
    assert ssim(x, y) == pytest.approx(ssim(y, x), rel=1e-12)


def test_dice_examples():
    a = np.zeros((4, 4), bool)
    a[0] = True
    b = np.zeros((4, 4), bool)
    b[0, :2] = True
    b[1, :2] = True
    assert dice(a, a) == 1.0
    assert dice(a, ~a) == 0.0
    assert dice(a, b) == 0.5
    assert dice(np.zeros(3), np.zeros(3)) == 1.0


@given(st.lists(st.booleans(), min_size=1, max_size=30), st.integers(0, 1000))
def test_dice_symmetric_and_one_iff_equal(bits, seed):
    a = np.array(bits)
    b = np.random.default_rng(seed).random(a.shape) < 0.5
    assert dice(a, b) == dice(b, a)
    if a.any() or b.any():
        assert (dice(a, b) == 1.0) == bool(np.array_equal(a, b))


def test_metrics_match_brute_force(rng):
    for _ in range(100):
        h, w = rng.integers(11, 16, size=2)
        x = rng.random((h, w))
        y = np.clip(x + rng.normal(0, rng.uniform(0.01, 0.3), x.shape), 0, 1)
        assert abs(psnr(x, y) - psnr_ref(x, y)) <= 1e-6
        assert abs(ssim(x, y) - ssim_ref(x, y)) <= 1e-6
        a, b = rng.random((h, w)) < 0.3, rng.random((h, w)) < 0.3
        assert abs(dice(a, b) - dice_ref(a, b)) <= 1e-6


# -- SIS --------------------------------------------------------------------------


def test_sis_hand_example():
    assert sis_from_dice([0.6, 0.8], [0.8, 0.95]) == 0.7 / 0.875
    assert sis_from_dice([0.6, 0.8], [0.8, 0.95]) == pytest.approx(0.8, abs=1e-15)
    with pytest.raises(MetricError):
        sis_from_dice([0.5], [0.0])


def _threshold(m):
    return (m > 0.5).astype(np.uint8)


def test_sis_identity_and_filter(rng):
    mags = rng.random((5, 8, 8))
    labels = _threshold(mags)
    labels[2] = 0
    value, per_image = sis(mags, mags, labels, _threshold)
    assert value == 1.0
    assert np.isnan(per_image[2]) and np.all(per_image[[0, 1, 3, 4]] == 1.0)
    with pytest.raises(MetricError, match="no image"):
        sis(mags, mags, np.zeros_like(labels), _threshold)


def test_sis_uses_ratio_of_means():
    labels = np.zeros((2, 2, 2), np.uint8)
    labels[:, 0, 0] = 1
    gt = labels.astype(float)
    rec = gt.copy()
    rec[1, 0, 1] = 1.0
    value, _ = sis(rec, gt, labels, _threshold)
    # recon dice (1, 2/3), gt dice (1, 1)
    assert value == pytest.approx((1 + 2 / 3) / 2)


# -- reports ----------------------------------------------------------------------


def test_aggregate_examples():
    r = aggregate_report("m", [{"id": "a", "psnr_db": 30.0}, {"id": "b", "psnr_db": 34.0}])
    assert r.aggregates["psnr_db"] == {"mean": 32.0, "std": 2.0, "n": 2}
    one = aggregate_report("m", [{"id": "a", "psnr_db": 30.0, "ssim": 0.5}])
    assert one.aggregates["ssim"]["std"] == 0
    with pytest.raises(MetricError):
        aggregate_report("m", [])


def test_json_csv_agree(tmp_path):
    records = [
        {"id": "a", "psnr_db": 31.25, "ssim": 0.875, "dice": 0.5},
        {"id": "b", "psnr_db": math.inf, "ssim": 1.0},
    ]
    report = aggregate_report("m", records, 0.9, {"seed": 1})
    report.write(tmp_path)
    data = read_report(tmp_path / "m.json")
    rows = list(csv.DictReader(io.StringIO((tmp_path / "m.csv").read_text())))
    assert [r["id"] for r in rows] == [r["id"] for r in data["records"]]
    for row, rec in zip(rows, data["records"]):
        for col in ("psnr_db", "ssim", "dice"):
            if col in rec:
                assert float(row[col]) == rec[col]
            else:
                assert row[col] == ""
    assert data["aggregates"]["psnr_db"]["mean"] == math.inf
    assert json.loads((tmp_path / "m.json").read_text())["records"][1]["psnr_db"] == "inf"
    assert data["sis"] == 0.9 and data["provenance"] == {"seed": 1}
