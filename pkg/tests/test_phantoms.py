import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from refinemri.phantoms import (
    DatasetError,
    PhantomSpec,
    batch_iterator,
    ellipse_mask,
    generate_dataset,
    generate_image,
    load_dataset,
    save_dataset,
)

SMALL = PhantomSpec(size=32, counts={"train": 20, "val": 10, "test": 10}, seed=3)


@pytest.fixture(scope="module")
def small():
    return generate_dataset(SMALL)


def test_generation_is_deterministic(small):
    again = generate_dataset(SMALL)
    assert again.content_hash() == small.content_hash()
    other = generate_dataset(PhantomSpec(size=32, counts={"train": 20, "val": 10, "test": 10}, seed=4))
    assert other.content_hash() != small.content_hash()


def test_roi_fraction(small):
    for split in (small.train, small.val, small.test):
        frac = np.mean(split.labels.reshape(len(split), -1).any(axis=1))
        assert abs(frac - 0.9) <= 1 / len(split)


def test_magnitude_normalised(small):
    mags = np.abs(small.train.images)
    assert mags.min() >= 0
    np.testing.assert_allclose(mags.reshape(len(mags), -1).max(axis=1), 1.0, atol=1e-6)


def test_roi_is_brightest_structure(small):
    for img, lab in zip(small.train.images, small.train.labels):
        if lab.any():
            mag = np.abs(img)
            assert mag[lab == 1].min() > mag[lab == 0].max()


def test_phase_is_nontrivial(small):
    assert np.abs(small.train.images.imag).max() > 0.1


def test_splits_disjoint_and_ids(small):
    ids = small.train.ids + small.val.ids + small.test.ids
    assert len(set(ids)) == len(ids)
    assert small.train.ids[0] == "train-00000"


def test_ellipse_center_of_pixel_rule():
    m = ellipse_mask(4, 2.0, 2.0, 1.0, 1.0, 0.0)
    # pixel centers at 1.5 and 2.5 are 0.5 away on each axis: (0.5^2 + 0.5^2) <= 1
    expected = np.zeros((4, 4), bool)
    expected[1:3, 1:3] = True
    assert np.array_equal(m, expected)
    tight = ellipse_mask(4, 2.0, 2.0, 0.5, 0.5, 0.0)
    assert not tight.any()


def test_roi_labels_are_pure_function_of_seed_and_index():
    a = generate_image(SMALL, 5, True)
    b = generate_image(SMALL, 5, True)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()
    assert a[1].sum() >= 9


def test_save_load_round_trip(tmp_path, small):
    save_dataset(small, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    for name in ("train", "val", "test"):
        assert back.split(name).images.tobytes() == small.split(name).images.tobytes()
        assert back.split(name).labels.tobytes() == small.split(name).labels.tobytes()
        assert back.split(name).ids == small.split(name).ids
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert manifest["spec"]["seed"] == 3
    regenerated = generate_dataset(PhantomSpec.from_dict(manifest["spec"]))
    assert regenerated.content_hash() == back.content_hash() == manifest["dataset_hash"]


def test_tampered_file_names_the_file(tmp_path, small):
    save_dataset(small, tmp_path / "d")
    victim = tmp_path / "d" / "images" / "val-00021.c64"
    victim.write_bytes(victim.read_bytes()[:-3])
    with pytest.raises(DatasetError, match="val-00021.c64"):
        load_dataset(tmp_path / "d")


def test_missing_or_corrupt_manifest(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path)
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(DatasetError, match="malformed"):
        load_dataset(tmp_path)


def test_spec_rejects_nonpositive_counts():
    with pytest.raises(ValueError):
        PhantomSpec(counts={"train": 0, "val": 1, "test": 1})


def test_batch_iterator_examples(small):
    split = small.train
    one = list(batch_iterator(split, len(split), shuffle=False))
    assert len(one) == 1 and np.array_equal(one[0], np.arange(len(split)))
    a = [b.tolist() for b in batch_iterator(split, 6, seed=9, epoch=2)]
    b = [b.tolist() for b in batch_iterator(split, 6, seed=9, epoch=2)]
    assert a == b
    assert [len(x) for x in a] == [6, 6, 6, 2]
    c = [b.tolist() for b in batch_iterator(split, 6, seed=9, epoch=3)]
    assert a != c


@given(st.integers(1, 30), st.integers(1, 12), st.integers(0, 50), st.integers(0, 5))
def test_batches_partition_the_split(n, batch, seed, epoch):
    split = generate_dataset(PhantomSpec(size=16, counts={"train": n, "val": 1, "test": 1}, ellipses=(3, 3))).train
    flat = np.concatenate(list(batch_iterator(split, batch, seed=seed, epoch=epoch)))
    assert sorted(flat.tolist()) == list(range(n))


def test_batch_size_must_be_positive(small):
    with pytest.raises(ValueError):
        list(batch_iterator(small.train, 0))


def test_spec_rejects_tiny_images():
    with pytest.raises(ValueError, match="at least 16"):
        PhantomSpec(size=8)
