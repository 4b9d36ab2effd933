import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from topdown.estimator import ChannelStacker, ObservationWindower, TopDownViewGAN
from topdown.obsmodel import episode_windows

TINY = dict(encoder="conv3d", batch_size=2, iterations_per_scale=2, fade_iterations=1,
            final_scale=8, max_iter=3, random_state=1)


@pytest.fixture(scope="module")
def data(episodes):
    X = episode_windows(episodes[0])[:6]
    y = episodes[0].targets[:6]
    return X, y


def test_params_and_clone():
    est = TopDownViewGAN(**TINY)
    params = est.get_params()
    assert params["encoder"] == "conv3d" and params["max_iter"] == 3
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(encoder="capsule")
    assert est.encoder == "capsule"


def test_not_fitted(data):
    with pytest.raises(NotFittedError):
        TopDownViewGAN().predict(data[0])


def test_fit_predict_transform_score(data, tmp_path):
    X, y = data
    est = TopDownViewGAN(**TINY, checkpoint_dir=str(tmp_path)).fit(X, y)
    assert est.scale == 8
    pred = est.predict(X[:2])
    assert pred.shape == (2, 8, 8, 3)
    assert est.transform(X[:2]).shape == (2, 4096)
    s = est.score(X, y)
    assert -1.0 <= s <= 1.0
    assert len(est.history_) == 3
    loaded = TopDownViewGAN.from_checkpoint(est.checkpoints_[-1])
    assert np.array_equal(loaded.predict(X[:2]), pred)


def test_input_validation(data):
    X, y = data
    est = TopDownViewGAN(**TINY)
    with pytest.raises(ValueError):
        est.fit(X[:, :20], y)
    with pytest.raises(ValueError):
        est.fit(X, y[:3])
    with pytest.raises(ValueError):
        est.fit(X * 2, y)
    with pytest.raises(TypeError):
        est.fit(X.astype(np.int64), y)


def test_windower_and_stacker(episodes):
    w = ObservationWindower().fit_transform(episodes[:2])
    assert w.shape == (len(episodes[0]) + len(episodes[1]), 21, 64, 64, 3)
    s = ChannelStacker().fit_transform(w[:3])
    assert s.shape == (3, 64, 64, 63)
    u8 = ChannelStacker().transform((w[:1] * 255).round().astype(np.uint8))
    assert np.allclose(u8, s[:1], atol=1 / 255)
