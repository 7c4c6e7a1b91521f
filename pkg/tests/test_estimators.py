import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from refinemri.estimators import CascadeReconstructor, RefinedReconstructor, RoiSegmenter, check_images
from refinemri.phantoms import PhantomSpec, generate_dataset


@pytest.fixture(scope="module")
def data():
    d = generate_dataset(PhantomSpec(size=32, counts={"train": 10, "val": 1, "test": 4}, seed=8))
    return d.train.images, d.train.labels, d.test.images, d.test.labels


@pytest.fixture(scope="module")
def fitted(data):
    X, _, _, _ = data
    return CascadeReconstructor(epochs=2, batch_size=4, lr=1e-3).fit(X)


def test_params_round_trip():
    est = CascadeReconstructor(epochs=3, ratio=0.125)
    assert est.get_params()["ratio"] == 0.125
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    est.set_params(seed=4)
    assert est.seed == 4
    refined = RefinedReconstructor(base=est, epochs=1)
    assert clone(refined).get_params()["base"].seed == 4


def test_input_validation():
    with pytest.raises(ValueError, match="shape"):
        check_images(np.zeros((2, 3, 4, 5)))
    with pytest.raises(ValueError, match="NaN"):
        check_images(np.full((1, 4, 4), np.nan))
    assert check_images(np.zeros((4, 4))).shape == (1, 4, 4)
    with pytest.raises(NotFittedError):
        CascadeReconstructor().predict(np.zeros((1, 16, 16)))
    with pytest.raises(ValueError, match="base"):
        RefinedReconstructor().fit(np.zeros((2, 16, 16)))
    with pytest.raises(ValueError, match="do not match"):
        RoiSegmenter().fit(np.zeros((2, 16, 16)), np.zeros((2, 8, 8)))


def test_reconstructor_fit_predict(fitted, data):
    _, _, Xt, _ = data
    pred = fitted.predict(Xt)
    assert pred.shape == Xt.shape and np.iscomplexobj(pred)
    assert np.array_equal(pred, fitted.predict(Xt))
    mags = fitted.transform(Xt)
    assert mags.dtype == np.float32 and np.allclose(mags, np.abs(pred))
    assert np.isfinite(fitted.score(Xt))
    assert len(fitted.history_) > 0


def test_refined_starts_from_base(fitted, data):
    X, _, Xt, _ = data
    refined = RefinedReconstructor(base=fitted, epochs=0).fit(X)
    assert np.array_equal(refined.predict(Xt), fitted.predict(Xt))
    trained = RefinedReconstructor(base=fitted, epochs=1, batch_size=4).fit(X)
    assert trained.calibration_.frozen


def test_joint_needs_no_base(data):
    X, _, Xt, _ = data
    est = RefinedReconstructor(joint=True, epochs=1, batch_size=4).fit(X)
    assert est.predict(Xt).shape == Xt.shape


def test_segmenter(data):
    X, y, Xt, yt = data
    seg = RoiSegmenter(epochs=1, batch_size=4).fit(X, y)
    prob = seg.predict_proba(Xt)
    assert prob.shape == Xt.shape and np.all((prob >= 0) & (prob <= 1))
    assert set(np.unique(seg.predict(Xt))) <= {0, 1}
    assert 0.0 <= seg.score(Xt, yt) <= 1.0
