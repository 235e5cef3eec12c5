import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffrecon.filtering import apply_filter, ramlak_filter
from diffrecon.geometry import DetectorSpec, Geometry2DParallel, VolumeSpec
from diffrecon.graph import DivergenceError, Graph, gradient_descent_step, train, tv_gradient, tv_loss
from diffrecon.phantom import shepp_logan_2d
from diffrecon.projector import backproject, forward_project


def _fd_gradient(g, loss, feeds, name, h=1e-6):
    p = g[name]
    base = p.value.copy()
    fd = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        p.value = base.copy()
        p.value[idx] += h
        up = float(g.forward(feeds)[loss.id])
        p.value[idx] -= 2 * h
        down = float(g.forward(feeds)[loss.id])
        fd[idx] = (up - down) / (2 * h)
    p.value = base
    return fd


def _analytic(g, loss, feeds, name):
    g.forward(feeds)
    return g.backward(loss)[name]


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_single_input_passes_through():
    g = Graph()
    x = g.input("x")
    v = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(g.forward({"x": v})[x.id], v)


def test_add_zero_parameter_is_identity():
    g = Graph()
    x = g.input("x")
    y = g.add(x, g.parameter("z", np.zeros((3, 3))))
    v = np.random.default_rng(0).random((3, 3))
    np.testing.assert_array_equal(g.forward({"x": v})[y.id], v)


def test_fbp_graph_equals_hand_composition():
    vol = VolumeSpec((64, 64), 1.0)
    geo = Geometry2DParallel(vol, DetectorSpec((92,), (1.0,)), 60, math.pi)
    sino = forward_project(shepp_logan_2d(vol), geo)
    k = ramlak_filter(92, 1.0)
    g = Graph()
    p = g.input("p")
    out = g.scale(g.backproject(g.fourier_filter(p, g.parameter("k", k.weights)), geo), math.pi / 60)
    by_hand = math.pi / 60 * backproject(apply_filter(sino, k), geo)
    assert np.array_equal(g.forward({"p": sino})[out.id], by_hand)


def test_forward_is_repeatable():
    g = Graph()
    x = g.input("x")
    y = g.multiply_weights(x, g.parameter("w", np.linspace(0, 1, 5)))
    v = np.random.default_rng(1).random((3, 5))
    assert np.array_equal(g.forward({"x": v})[y.id], g.forward({"x": v})[y.id])


def test_missing_feed_and_shape_errors():
    g = Graph()
    a, b = g.input("a"), g.input("b")
    loss = g.l2_loss(a, b)
    with pytest.raises(ValueError, match="missing feed"):
        g.forward({"a": np.zeros(3)})
    with pytest.raises(ValueError, match="l2_loss"):
        g.forward({"a": np.zeros(3), "b": np.zeros(4)})
    g.forward({"a": np.zeros(3), "b": np.ones(3)})
    with pytest.raises(ValueError, match="not scalar"):
        g.backward(a)
    assert loss.op == "l2_loss"


def test_duplicate_and_unknown_nodes():
    g = Graph()
    g.input("x")
    with pytest.raises(ValueError):
        g.input("x")
    with pytest.raises(KeyError):
        g.add("x", "nope")


def test_l2_of_identical_operands_has_zero_gradient():
    g = Graph()
    x = g.parameter("x", np.random.default_rng(2).random(4))
    loss = g.l2_loss(x, x)
    assert not _analytic(g, loss, {}, "x").any()


def test_multiply_weights_gradients_with_broadcasting():
    rng = np.random.default_rng(3)
    g = Graph()
    x = g.parameter("x", rng.normal(size=(4, 6)))
    w = g.parameter("w", rng.normal(size=(6,)))
    loss = g.l2_loss(g.multiply_weights(x, w), g.input("t"))
    feeds = {"t": rng.normal(size=(4, 6))}
    for name in ("x", "w"):
        assert _rel(_analytic(g, loss, feeds, name), _fd_gradient(g, loss, feeds, name)) < 1e-4


def test_fourier_filter_gradients():
    rng = np.random.default_rng(4)
    g = Graph()
    s = g.parameter("s", rng.normal(size=(3, 10)))
    k = g.parameter("k", rng.normal(size=16))
    loss = g.l2_loss(g.fourier_filter(s, k), g.input("t"))
    feeds = {"t": rng.normal(size=(3, 10))}
    for name in ("s", "k"):
        assert _rel(_analytic(g, loss, feeds, name), _fd_gradient(g, loss, feeds, name)) < 1e-4


def test_single_row_filter_gradient_per_bin():
    rng = np.random.default_rng(5)
    g = Graph()
    k = g.parameter("k", rng.normal(size=8))
    loss = g.l2_loss(g.fourier_filter(g.input("s"), k), g.input("t"))
    feeds = {"s": rng.normal(size=(1, 8)), "t": rng.normal(size=(1, 8))}
    a, fd = _analytic(g, loss, feeds, "k"), _fd_gradient(g, loss, feeds, "k")
    assert np.all(np.abs(a - fd) <= 1e-4 * np.abs(fd).max())


def test_add_scale_and_tv_gradients():
    rng = np.random.default_rng(6)
    g = Graph()
    a = g.parameter("a", rng.normal(size=(5, 5)))
    b = g.parameter("b", rng.normal(size=(5, 1)))
    s = g.add(a, b)
    loss = g.add(g.l2_loss(s, g.input("t")), g.scale(g.tv_loss(s), 0.3))
    feeds = {"t": rng.normal(size=(5, 5))}
    for name in ("a", "b"):
        assert _rel(_analytic(g, loss, feeds, name), _fd_gradient(g, loss, feeds, name)) < 1e-4


def test_projector_gradient_is_backprojection():
    geo = Geometry2DParallel(VolumeSpec((16, 16), 1.0), DetectorSpec((24,), (1.0,)), 8, math.pi)
    rng = np.random.default_rng(8)
    x0 = rng.random((16, 16))
    p = forward_project(rng.random((16, 16)), geo)
    g = Graph()
    x = g.parameter("x", x0)
    loss = g.l2_loss(g.forward_project(x, geo), g.input("p"))
    grad = _analytic(g, loss, {"p": p}, "x")
    np.testing.assert_allclose(grad, 2 * backproject(forward_project(x0, geo) - p, geo), rtol=1e-12)


def test_projector_gradient_close_to_finite_differences_at_reconstruction_start():
    # x = 0 against a phantom sinogram: the first step of the iterative experiment
    geo = Geometry2DParallel(VolumeSpec((16, 16), 1.0), DetectorSpec((24,), (1.0,)), 8, math.pi)
    p = forward_project(shepp_logan_2d(geo.volume), geo)
    g = Graph()
    x = g.parameter("x", np.zeros((16, 16)))
    loss = g.l2_loss(g.forward_project(x, geo), g.input("p"))
    feeds = {"p": p}
    err = _rel(_analytic(g, loss, feeds, "x"), _fd_gradient(g, loss, feeds, "x", h=1e-4))
    assert err < 0.03


def test_backprojection_node_gradient_is_forward_projection():
    geo = Geometry2DParallel(VolumeSpec((8, 8), 1.0), DetectorSpec((12,), (1.0,)), 4, math.pi)
    rng = np.random.default_rng(9)
    g = Graph()
    s = g.parameter("s", rng.random(geo.sinogram_shape))
    loss = g.l2_loss(g.backproject(s, geo), g.input("x"))
    x = rng.random((8, 8))
    grad = _analytic(g, loss, {"x": x}, "s")
    np.testing.assert_allclose(grad, 2 * forward_project(backproject(g["s"].value, geo) - x, geo), rtol=1e-12)


def test_tv_values():
    assert tv_loss(np.full((4, 4), 3.0)) == 0
    assert tv_loss(np.array([[0.0, 1.0], [2.0, 3.0]])) == 6
    assert tv_loss(np.arange(8.0).reshape(2, 2, 2)) == 4 * 1 + 4 * 2 + 4 * 4


def test_tv_subgradient_zero_at_ties():
    assert not tv_gradient(np.ones((3, 3))).any()


@given(st.integers(0, 2**31), st.floats(-10, 10))
def test_tv_homogeneity(seed, alpha):
    x = np.random.default_rng(seed).normal(size=(6, 7))
    assert tv_loss(alpha * x) == pytest.approx(abs(alpha) * tv_loss(x), rel=1e-12, abs=1e-12)


def test_gradient_descent_step_rules():
    g = Graph()
    p = g.parameter("p", 1.0)
    frozen = g.parameter("q", 1.0, trainable=False)
    gradient_descent_step([p, frozen], {"p": np.array(2.0), "q": np.array(2.0)}, 0.1)
    assert p.value == pytest.approx(0.8) and frozen.value == 1.0
    gradient_descent_step([p], {"p": np.array(0.0)}, 0.1)
    assert p.value == pytest.approx(0.8)
    with pytest.raises(ValueError):
        gradient_descent_step([p], {"p": np.zeros(3)}, 0.1)
    with pytest.raises(ValueError):
        gradient_descent_step([p], {"p": np.array(1.0)}, 0.0)


def test_scalar_quadratic_converges():
    g = Graph()
    p = g.parameter("p", 0.0)
    loss = g.l2_loss(p, g.input("target"))
    log = train(g, loss, {"target": 3.0}, 0.4, 50)
    assert len(log) == 51
    assert p.value == pytest.approx(3.0, abs=1e-6)


def test_divergence_is_reported():
    g = Graph()
    p = g.parameter("p", 1.0)
    loss = g.l2_loss(p, g.input("target"))
    with pytest.raises(DivergenceError):
        train(g, loss, {"target": 0.0}, 1e200, 5)


def test_train_logs_metric():
    g = Graph()
    p = g.parameter("p", 0.0)
    loss = g.l2_loss(p, g.input("target"))
    log = train(g, loss, {"target": 1.0}, 0.1, 3, metric=lambda gr: float(gr["p"].value))
    assert [row[0] for row in log] == [0, 1, 2, 3]
    assert log[0][2] == 0.0 and log[-1][2] > 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_forward_projector_node_linear_through_graph(seed):
    geo = Geometry2DParallel(VolumeSpec((8, 8), 1.0), DetectorSpec((12,), (1.0,)), 3, math.pi)
    rng = np.random.default_rng(seed)
    g = Graph()
    x = g.input("x")
    y = g.forward_project(g.scale(x, 2.0), geo)
    v = rng.normal(size=(8, 8))
    np.testing.assert_allclose(g.forward({"x": v})[y.id], 2 * forward_project(v, geo), atol=1e-12)
