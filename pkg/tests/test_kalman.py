import numpy as np
import pytest

from hypertrack.geometry import BBox
from hypertrack.kalman import KalmanConfig, KFState, kalman_forecast, kf_init, kf_predict, kf_update

CFG = KalmanConfig()


def test_init_prior():
    s = kf_init(BBox(0.5, 0.4, 0.1, 0.2))
    assert np.array_equal(s.mean, [0.5, 0.4, 0.1, 0.2, 0, 0, 0, 0])
    h = 0.2
    expect = [(2 * h / 20) ** 2] * 4 + [(10 * h / 20) ** 2] * 4
    assert np.allclose(np.diag(s.covariance), expect, rtol=1e-15)
    assert np.array_equal(s.covariance, np.diag(np.diag(s.covariance)))
    t = kf_init(BBox(0.5, 0.4, 0.1, 0.2))
    assert np.array_equal(s.mean, t.mean) and np.array_equal(s.covariance, t.covariance)


def test_predict_propagates_velocity():
    s = kf_init(np.array([0.5, 0.5, 0.1, 0.2]))
    assert np.array_equal(kf_predict(s).box, s.box)
    s.mean[4] = 0.1
    assert kf_predict(s).mean[0] == pytest.approx(0.6)


def test_predict_increases_trace():
    s = kf_init(np.array([0.5, 0.5, 0.1, 0.2]))
    for _ in range(5):
        nxt = kf_predict(s)
        assert np.trace(nxt.covariance) > np.trace(s.covariance)
        s = nxt


def test_update_limits():
    s = kf_predict(kf_init(np.array([0.5, 0.5, 0.1, 0.2])))
    z = np.array([0.52, 0.49, 0.11, 0.19])
    exact = kf_update(s, z, R=np.eye(4) * 1e-18)
    assert np.allclose(exact.box, z, atol=1e-12)
    same = kf_update(s, s.box)
    assert np.allclose(same.mean, s.mean, atol=1e-15)


def test_update_matches_hand_computed_scalar_gain():
    # every coordinate is an independent (position, velocity) pair
    h = 0.2
    sp, sv = 2 * h / 20, 10 * h / 20
    qp, qv = (h / 20) ** 2, (h / 20) ** 2
    r = (h / 20) ** 2
    p00 = sp ** 2 + sv ** 2 + qp
    p01 = sv ** 2
    k0, k1 = p00 / (p00 + r), p01 / (p00 + r)
    s = kf_predict(kf_init(np.array([0.5, 0.5, 0.1, h])))
    z = np.array([0.53, 0.5, 0.1, h])
    post = kf_update(s, z)
    assert post.mean[0] == pytest.approx(0.5 + k0 * 0.03, abs=1e-15)
    assert post.mean[4] == pytest.approx(k1 * 0.03, abs=1e-15)
    assert post.covariance[0, 0] == pytest.approx((1 - k0) * p00, rel=1e-12)


def test_singular_innovation_raises():
    s = KFState(np.array([0.5, 0.5, 0.1, 0.2, 0, 0, 0, 0]), np.zeros((8, 8)))
    with pytest.raises(np.linalg.LinAlgError):
        kf_update(s, s.box, R=np.zeros((4, 4)))


def test_covariance_stays_symmetric_and_update_shrinks_trace(rng):
    s = kf_init(np.array([0.5, 0.5, 0.05, 0.1]))
    for _ in range(30):
        prior = kf_predict(s)
        z = prior.box + rng.normal(0, 0.005, 4)
        s = kf_update(prior, z)
        assert np.abs(s.covariance - s.covariance.T).max() <= 1e-12
        assert np.trace(s.covariance) <= np.trace(prior.covariance)
        assert np.all(np.linalg.eigvalsh(s.covariance) > -1e-15)


def test_update_clamps_size():
    s = kf_predict(kf_init(np.array([0.5, 0.5, 0.01, 0.01])))
    post = kf_update(s, np.array([0.5, 0.5, -1.0, -1.0]))
    assert post.mean[2] > 0 and post.mean[3] > 0


def test_constant_velocity_exactness(rng):
    for _ in range(20):
        start = np.array([*rng.uniform(0.2, 0.8, 2), *rng.uniform(0.03, 0.1, 2)])
        v = np.array([*rng.uniform(-0.01, 0.01, 2), *rng.uniform(-1e-4, 1e-4, 2)])
        track = start + np.arange(12)[:, None] * v
        # 11 frames: init plus 10 updates, then predict frame 12
        pred = kalman_forecast(track[:11])
        assert np.abs(pred - track[11]).max() < 1e-6
