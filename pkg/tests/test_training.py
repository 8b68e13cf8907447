import numpy as np
import pytest

from hypertrack.estimator import EstimatorConfig, HyperSSMNetwork
from hypertrack.geometry import smooth_l1
from hypertrack.numeric import make_rng
from hypertrack.training import build_windows, giou_loss_reference, loss, loss_and_grad, train


def seq(n, objs=2):
    return {f: {k: np.array([0.1 * k + 0.01 * f, 0.5, 0.05, 0.1]) for k in range(1, objs + 1)}
            for f in range(1, n + 1)}


@pytest.mark.parametrize("n, expect", [(6, 1), (5, 0), (10, 5)])
def test_window_counts(n, expect):
    assert len(build_windows(seq(n), 5)) == expect


def test_window_alignment():
    w = build_windows(seq(10), 5)[0]
    assert w.input.shape == w.target.shape == (2, 5, 4)
    assert np.array_equal(w.input[:, 1:], w.target[:, :-1])
    assert w.frame == 5 and w.ids.tolist() == [1, 2]


def test_windows_skip_gaps_and_partial_objects():
    s = seq(12)
    del s[4]
    assert [w.frame for w in build_windows(s, 5)] == [9, 10, 11]  # spans 5-10, 6-11, 7-12
    s = seq(9)
    del s[3][2]
    w = build_windows(s, 5)
    assert [x.ids.tolist() for x in w] == [[1], [1], [1], [1, 2]]


def test_loss_examples():
    t = np.array([[[0.5, 0.5, 0.2, 0.2]]])
    assert loss(t, t, 1.0, 1.0) == 0.0
    p = t + [0.5, 0, 0, 0]
    assert loss(p, t, 1.0, 0.0) == pytest.approx(0.03125, abs=1e-15)
    rng = make_rng(1)
    p = t + rng.normal(0, 0.05, (3, 2, 4)) * [1, 1, 0.1, 0.1]
    t3 = np.broadcast_to(t, p.shape)
    assert loss(p, t3, 1.0, 0.0) == pytest.approx(smooth_l1(p, t3).mean())
    expect = smooth_l1(p, t3).mean() + 2.0 * giou_loss_reference(p.reshape(-1, 4), t3.reshape(-1, 4)).mean()
    assert loss(p, t3, 1.0, 2.0) == pytest.approx(expect, rel=1e-12)


def test_loss_gradient_finite_difference(rng):
    t = np.column_stack([rng.uniform(0.3, 0.7, (6, 2)), rng.uniform(0.05, 0.2, (6, 2))])
    p = t + rng.normal(0, 0.03, t.shape)
    _, g = loss_and_grad(p, t, 1.0, 1.0)
    h = 1e-6
    num = np.zeros_like(p)
    for idx in np.ndindex(p.shape):
        e = np.zeros_like(p)
        e[idx] = h
        num[idx] = (loss(p + e, t, 1.0, 1.0) - loss(p - e, t, 1.0, 1.0)) / (2 * h)
    assert np.abs(num - g).max() < 1e-7


def test_shape_mismatch():
    with pytest.raises(ValueError):
        loss(np.zeros((1, 2, 4)), np.zeros((1, 3, 4)))


def small_net(seed=0):
    return HyperSSMNetwork(EstimatorConfig(layers=2, embed_dim=8, state_dim=8), make_rng(seed, "init"))


def test_zero_epochs_leaves_model_unchanged():
    net = small_net()
    before = {k: v.copy() for k, v in net.state_dict().items()}
    assert train(build_windows(seq(10), 5), net, epochs=0) == []
    assert all(np.array_equal(before[k], v) for k, v in net.state_dict().items())


def test_training_is_deterministic_and_reduces_loss():
    samples = build_windows(seq(30, objs=3), 5)
    a, b = small_net(), small_net()
    ca = train(samples, a, epochs=5, batch_size=4, lr=1e-3, lambda2=1.0, seed=3)
    cb = train(samples, b, epochs=5, batch_size=4, lr=1e-3, lambda2=1.0, seed=3)
    assert ca == cb and ca[-1] < ca[0]
    sa, sb = a.state_dict(), b.state_dict()
    assert all(np.array_equal(sa[k], sb[k]) for k in sa)


def test_non_finite_loss_aborts():
    s = seq(6)
    # only the target frame is corrupted, so the input checks pass
    s[6][1] = np.array([np.nan, 0.5, 0.05, 0.1])
    with pytest.raises(FloatingPointError, match="epoch 0"):
        train(build_windows(s, 5), small_net(), epochs=1)


def test_empty_training_set():
    with pytest.raises(ValueError):
        train([], small_net())
