import numpy as np
import pytest

from hypertrack.estimator import (
    EstimatorConfig,
    HyperSSMLayer,
    HyperSSMNetwork,
    discretize,
    hyperssm_block,
    hyperssm_block_backward,
)
from hypertrack.hypergraph import Hypergraph, construct
from hypertrack.numeric import Param, grad_check, make_rng
from hypertrack.training import loss, loss_and_grad
from hypertrack.verify import random_windows


def small(use_hconv=True, **kw):
    return EstimatorConfig(window_len=5, layers=2, embed_dim=8, state_dim=8, use_hconv=use_hconv, **kw)


def test_discretize_examples():
    a_bar, b_bar = discretize(np.array([-1.0]), np.array([0.5]), np.array([[2.0, 4.0]]))
    assert a_bar[0] == pytest.approx(np.exp(-0.5), abs=1e-15)
    assert np.allclose(b_bar, [[1.0, 2.0]])
    a_bar, b_bar = discretize(np.array([-1e-12]), np.array([1.0]), np.ones((1, 1)))
    assert a_bar[0] == pytest.approx(1.0)
    a_bar, b_bar = discretize(np.array([-3.0]), np.array([1e-12]), np.ones((1, 2)))
    assert a_bar[0] == pytest.approx(1.0) and np.allclose(b_bar, 0.0)


def test_ssm_constraints_hold_after_random_init():
    layer = HyperSSMLayer(6, 5, make_rng(0, "t"), "l")
    assert np.all(layer.ssm.A < 0) and np.all(layer.ssm.delta > 0)
    a_bar, _ = discretize(layer.ssm.A, layer.ssm.delta, layer.ssm.B.value)
    assert np.all(np.abs(a_bar) < 1)
    assert np.allclose(layer.ssm.delta, 0.1)
    assert layer.ssm.A.min() == pytest.approx(-4.0) and layer.ssm.A.max() == pytest.approx(-0.5)


def test_block_with_zero_theta_and_c_doubles_input(rng):
    layer = HyperSSMLayer(4, 3, make_rng(1, "t"), "l")
    layer.ssm.C.value[...] = 0.0
    x = rng.normal(size=(3, 5, 4))
    g = construct(rng.normal(size=(3, 2)), 0.0)
    y, _, _ = hyperssm_block(x, g, layer, np.zeros((3, 3)))
    assert np.array_equal(y, 2 * x)


def test_block_memoryless_when_decay_vanishes(rng):
    layer = HyperSSMLayer(4, 3, make_rng(1, "t"), "l")
    layer.ssm.a_raw.value[...] = 800.0  # A -> -800, A_bar underflows to 0
    x = rng.normal(size=(2, 5, 4))
    _, h_last, cache = hyperssm_block(x, Hypergraph.singleton(2), layer, rng.normal(size=(2, 3)))
    b_bar = cache[6]
    assert np.allclose(h_last, x[:, -1] @ b_bar.T, atol=1e-15)


def test_block_matches_explicit_recurrence(rng):
    layer = HyperSSMLayer(4, 3, make_rng(2, "t"), "l")
    layer.hconv_in.value[...] = rng.normal(size=(4, 4))
    layer.hconv_out.value[...] = rng.normal(size=(4, 4))
    n = 4
    x = rng.normal(size=(n, 5, 4))
    g = construct(rng.normal(size=(n, 3)), 0.1)
    p = g.propagation()
    h0 = rng.normal(size=(n, 3))
    y, h_last, _ = hyperssm_block(x, g, layer, h0)
    a_bar, b_bar = discretize(layer.ssm.A, layer.ssm.delta, layer.ssm.B.value)
    h = h0.copy()
    for t in range(5):
        xt = x[:, t]
        conv_in = xt + p @ xt @ layer.hconv_in.value
        conv_out = xt + p @ xt @ layer.hconv_out.value
        h = a_bar * h + conv_in @ b_bar.T
        assert np.allclose(y[:, t], xt + h @ layer.ssm.C.value.T + conv_out, atol=1e-12)
    assert np.allclose(h_last, h, atol=1e-12)


def test_block_shape_errors(rng):
    layer = HyperSSMLayer(4, 3, make_rng(1, "t"), "l")
    x = rng.normal(size=(2, 5, 4))
    with pytest.raises(ValueError):
        hyperssm_block(x, Hypergraph.singleton(2), layer, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        hyperssm_block(x, Hypergraph.singleton(3), layer, np.zeros((2, 3)))
    with pytest.raises(ValueError):
        hyperssm_block(rng.normal(size=(2, 5, 5)), Hypergraph.singleton(2), layer, np.zeros((2, 3)))


def test_block_backward_matches_finite_differences(rng):
    layer = HyperSSMLayer(4, 3, make_rng(5, "t"), "l")
    layer.hconv_in.value[...] = rng.normal(size=(4, 4)) * 0.3
    layer.hconv_out.value[...] = rng.normal(size=(4, 4)) * 0.3
    g = construct(rng.normal(size=(3, 2)), 0.0)
    xp = Param("x", rng.normal(size=(3, 5, 4)))
    h0p = Param("h0", rng.normal(size=(3, 3)))
    gy = rng.normal(size=(3, 5, 4))
    gh = rng.normal(size=(3, 3))
    params = layer.params() + [xp, h0p]

    def f():
        y, hl, _ = hyperssm_block(xp.value, g, layer, h0p.value)
        return float((y * gy).sum() + (hl * gh).sum())

    def analytic():
        _, _, cache = hyperssm_block(xp.value, g, layer, h0p.value)
        gx, gh0 = hyperssm_block_backward(gy, gh, layer, cache)
        xp.grad += gx
        h0p.grad += gh0

    assert grad_check(f, params, h=1e-5, analytic=analytic) < 1e-5


def test_zero_model_outputs_shifted_window(rng):
    net = HyperSSMNetwork(small())
    w = random_windows(rng, 4, 5)
    out = net.estimate(w)
    assert np.array_equal(out[:, :-1], w[:, 1:])
    assert np.array_equal(out[:, -1], w[:, -1])
    assert np.array_equal(net.predict_next([w[0], w[1][:2]]), [w[0, -1], w[1, 1]])


def test_empty_input_gives_empty_output():
    net = HyperSSMNetwork(small(), make_rng(0, "init"))
    assert net.estimate(np.zeros((0, 5, 4))).shape == (0, 5, 4)
    assert net.predict_next([]).shape == (0, 4)


def test_forward_rejects_wrong_window_length(rng):
    net = HyperSSMNetwork(small(), make_rng(0, "init"))
    with pytest.raises(ValueError):
        net.estimate(random_windows(rng, 2, 4))


def test_forward_is_deterministic(rng):
    net = HyperSSMNetwork(small(), make_rng(0, "init"))
    w = random_windows(rng, 1, 5)
    assert np.array_equal(net.estimate(w), net.estimate(w.copy()))


@pytest.mark.parametrize("use_hconv", [True, False])
@pytest.mark.parametrize("lambda2", [0.0, 1.0])
def test_full_model_gradient(use_hconv, lambda2):
    rng = make_rng(0, "grad")
    net = HyperSSMNetwork(small(use_hconv), rng)
    for layer in net.layers:  # exercise the hypergraph path with nonzero weights
        layer.hconv_in.value[...] = rng.normal(size=layer.hconv_in.shape) * 0.2
        layer.hconv_out.value[...] = rng.normal(size=layer.hconv_out.shape) * 0.2
    x = random_windows(rng, 3, 5, groups=1)
    target = x + rng.normal(0, 0.003, x.shape)

    def f():
        return loss(net.estimate(x), target, 1.0, lambda2)

    def analytic():
        pred, cache = net.forward(x)
        net.backward(loss_and_grad(pred, target, 1.0, lambda2)[1], cache)

    assert grad_check(f, net.params(), h=1e-5, analytic=analytic) < 1e-3


def test_reduction_to_plain_ssm(rng):
    for _ in range(10):
        hyper = HyperSSMNetwork(small(True), rng)
        plain = HyperSSMNetwork(small(False))
        plain.load_state_dict(hyper.state_dict())
        w = random_windows(rng, int(rng.integers(1, 9)), 5)
        a = hyper.forward(w, graph=Hypergraph.singleton(len(w)))[0]
        assert np.abs(a - plain.estimate(w)).max() <= 1e-10


def test_model_permutation_equivariance(rng):
    for _ in range(10):
        net = HyperSSMNetwork(small(True, theta=0.3), rng)
        for layer in net.layers:
            layer.hconv_in.value[...] = rng.normal(size=layer.hconv_in.shape) * 0.3
        n = int(rng.integers(2, 11))
        w = random_windows(rng, n, 5)
        perm = rng.permutation(n)
        assert np.abs(net.estimate(w)[perm] - net.estimate(w[perm])).max() <= 1e-10


def test_isolated_objects_do_not_influence_each_other(rng):
    net = HyperSSMNetwork(small(True), rng)
    for layer in net.layers:
        layer.hconv_in.value[...] = rng.normal(size=layer.hconv_in.shape)
    w = random_windows(rng, 3, 5)
    w2 = w.copy()
    w2[1:] += rng.normal(0, 0.01, w2[1:].shape)
    single = Hypergraph.singleton(3)
    a = net.forward(w, graph=single)[0]
    b = net.forward(w2, graph=single)[0]
    assert np.array_equal(a[0], b[0])


def test_segments_match_separate_calls(rng):
    net = HyperSSMNetwork(small(True, theta=0.0), rng)
    for layer in net.layers:
        layer.hconv_out.value[...] = rng.normal(size=layer.hconv_out.shape)
    a = random_windows(rng, 3, 5)
    b = random_windows(rng, 4, 5)
    joint = net.estimate(np.concatenate([a, b]), segments=np.array([0, 0, 0, 1, 1, 1, 1]))
    assert np.allclose(joint[:3], net.estimate(a), atol=1e-13)
    assert np.allclose(joint[3:], net.estimate(b), atol=1e-13)


def test_checkpoint_round_trip(tmp_path, rng):
    net = HyperSSMNetwork(small(False, theta=0.7), make_rng(4, "init"))
    path = tmp_path / "model.ckpt"
    net.save(path)
    back = HyperSSMNetwork.load(path)
    assert back.config == net.config
    w = random_windows(rng, 3, 5)
    assert np.array_equal(back.estimate(w), net.estimate(w))


def test_plain_model_excludes_hypergraph_params():
    names = {p.name for p in HyperSSMNetwork(small(False)).params()}
    assert not any("hconv" in n for n in names)
    names = {p.name for p in HyperSSMNetwork(small(True)).params()}
    assert any("hconv" in n for n in names)
