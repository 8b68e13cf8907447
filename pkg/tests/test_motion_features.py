import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hypertrack.motion_features import (
    TrajectoryEmbedder,
    TrajectoryWindow,
    embed_trajectory,
    ema_velocity,
    ema_weights,
    pad_history,
    velocity_sequence,
)
from hypertrack.numeric import grad_check, make_rng

finite = st.floats(-10, 10, allow_nan=False)
alphas = st.sampled_from([0.1, 0.3, 0.5, 0.9, 1.0])


def test_velocity_sequence_cases():
    still = np.tile([0.5, 0.5, 0.1, 0.2], (4, 1))
    assert np.array_equal(velocity_sequence(still), np.zeros((3, 4)))
    moving = still.copy()
    moving[:, 0] += 0.1 * np.arange(4)
    assert np.allclose(velocity_sequence(moving), np.tile([0.1, 0, 0, 0], (3, 1)), atol=1e-15)
    w = np.array([[1.0, 2, 3, 4], [2.0, 0, 3, 5], [0.5, 1, 1, 1]])
    assert np.array_equal(velocity_sequence(w), [[1, -2, 0, 1], [-1.5, 1, -2, -4]])
    with pytest.raises(ValueError):
        velocity_sequence(w[:1])


def test_trajectory_window_validation():
    boxes = np.tile([0.5, 0.5, 0.1, 0.1], (3, 1))
    w = TrajectoryWindow(boxes, [1, 2, 3])
    assert len(w) == 3
    assert np.array_equal(velocity_sequence(w), np.zeros((2, 4)))
    with pytest.raises(ValueError):
        TrajectoryWindow(boxes, [1, 3, 2])


def test_ema_hand_example():
    v = [[1, 0, 0, 0], [3, 0, 0, 0]]
    assert np.allclose(ema_weights(2, 0.5), [1 / 3, 2 / 3])
    assert ema_velocity(v, 0.5) == pytest.approx([7 / 3, 0, 0, 0], abs=1e-15)


def test_ema_alpha_one_is_last_velocity():
    v = np.array([[1.0, 2, 3, 4], [5.0, 6, 7, 8]])
    assert np.array_equal(ema_velocity(v, 1.0), v[-1])


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
def test_ema_rejects_bad_alpha(alpha):
    with pytest.raises(ValueError):
        ema_velocity([[1.0, 0, 0, 0]], alpha)


@given(arrays(np.float64, (4,), elements=finite), st.integers(1, 10), alphas)
def test_ema_fixed_point(c, n, alpha):
    assert np.abs(ema_velocity(np.tile(c, (n, 1)), alpha) - c).max() <= 1e-12 * max(1.0, np.abs(c).max())


@given(arrays(np.float64, (5, 4), elements=finite), arrays(np.float64, (4,), elements=finite), alphas)
@settings(max_examples=100)
def test_ema_translation_and_convex_hull(v, c, alpha):
    e = ema_velocity(v, alpha)
    assert np.allclose(ema_velocity(v + c, alpha), e + c, atol=1e-9)
    assert np.all(e >= v.min(axis=0) - 1e-9) and np.all(e <= v.max(axis=0) + 1e-9)


def test_pad_history_repeats_oldest_box():
    h = np.array([[0.1, 0.1, 0.1, 0.1], [0.2, 0.2, 0.1, 0.1]])
    padded = pad_history(h, 5)
    assert padded.shape == (5, 4)
    assert np.array_equal(padded[:4], np.tile(h[0], (4, 1)))
    assert np.array_equal(padded[4], h[1])
    long = np.arange(40.0).reshape(10, 4)
    assert np.array_equal(pad_history(long, 5), long[-5:])


def test_embedder_zero_weights_return_bias():
    emb = TrajectoryEmbedder(5, 6)
    emb.b2.value[...] = np.arange(6)
    window = np.tile([0.5, 0.5, 0.1, 0.2], (5, 1))
    assert np.array_equal(embed_trajectory(window, emb), np.arange(6))


def test_embedder_is_deterministic_and_rejects_bad_input():
    emb = TrajectoryEmbedder(5, 8, make_rng(0, "emb"))
    w = make_rng(1, "w").uniform(0.1, 0.9, (5, 4))
    assert np.array_equal(embed_trajectory(w, emb), embed_trajectory(w.copy(), emb))
    bad = w.copy()
    bad[2, 1] = np.inf
    with pytest.raises(ValueError):
        embed_trajectory(bad, emb)
    with pytest.raises(ValueError):
        embed_trajectory(w[:4], emb)


def test_embedder_gradient_matches_finite_differences():
    rng = make_rng(3, "emb-grad")
    emb = TrajectoryEmbedder(5, 8, rng)
    windows = rng.uniform(0.2, 0.8, (4, 5, 4))
    up = rng.normal(size=(4, 8))

    def loss():
        return float((emb.forward(windows, 0.5)[0] * up).sum())

    def analytic():
        _, cache = emb.forward(windows, 0.5)
        emb.backward(up, cache)

    assert grad_check(loss, emb.params(), h=1e-6, analytic=analytic) < 1e-5
