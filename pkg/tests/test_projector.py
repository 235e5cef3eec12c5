import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffrecon.geometry import DetectorSpec, Geometry2DFan, Geometry2DParallel, Geometry3DCone, VolumeSpec
from diffrecon.phantom import circle, rasterize_primitives, sphere
from diffrecon.projector import (
    backproject,
    backproject_cone_3d,
    backproject_fan_2d,
    backproject_parallel_2d,
    forward_cone_3d,
    forward_fan_2d,
    forward_parallel_2d,
    forward_project,
    sampling_step,
)


def test_zero_in_zero_out(parallel_small, fan_small, cone_small):
    for geo in (parallel_small, fan_small, cone_small):
        assert not forward_project(np.zeros(geo.volume.shape), geo).any()
        assert not backproject(np.zeros(geo.sinogram_shape), geo).any()


def test_single_pixel_intersection_length():
    geo = Geometry2DParallel(VolumeSpec((3, 3), 1.0), DetectorSpec((3,), (1.0,)), 1, math.pi)
    img = np.zeros((3, 3))
    img[1, 1] = 1.0
    sino = forward_parallel_2d(img, geo)
    assert sino[0, 1] == pytest.approx(1.0, abs=0.01)
    assert abs(sino[0, 0]) < 0.01 and abs(sino[0, 2]) < 0.01


def test_axis_aligned_view_sums_rows():
    # theta = 0: rays run along +x, the detector axis is +y, so bins follow rows
    geo = Geometry2DParallel(VolumeSpec((6, 6), 1.0), DetectorSpec((6,), (1.0,)), 1, math.pi)
    img = np.random.default_rng(0).random((6, 6))
    np.testing.assert_allclose(forward_parallel_2d(img, geo)[0], img.sum(axis=1), rtol=1e-12)


def test_chord_length_parallel():
    vol = VolumeSpec((64, 64), 1.0)
    geo = Geometry2DParallel(vol, DetectorSpec((80,), (1.0,)), 7, math.pi)
    r = 20.0
    sino = forward_parallel_2d(rasterize_primitives([circle((0.0, 0.0), r)], vol), geo)
    d = geo.detector.coordinates()
    inside = np.abs(d) < r - 1
    expected = 2 * np.sqrt(r**2 - d[inside] ** 2)
    err = np.abs(sino[:, inside] - expected)
    assert np.quantile(err, 0.9) <= 2 * sampling_step(geo)


def test_fan_central_ray_is_diameter():
    vol = VolumeSpec((64, 64), 1.0)
    geo = Geometry2DFan(vol, DetectorSpec((81,), (1.0,)), 5, 2 * math.pi, sid=150.0, sdd=300.0)
    sino = forward_fan_2d(rasterize_primitives([circle((0.0, 0.0), 20.0)], vol), geo)
    np.testing.assert_allclose(sino[:, 40], 40.0, atol=2 * sampling_step(geo))


def test_fan_tends_to_parallel_for_distant_source():
    vol = VolumeSpec((32, 32), 1.0)
    img = rasterize_primitives([circle((3.0, -2.0), 9.0), circle((-6.0, 4.0), 4.0, 0.5)], vol)
    par = Geometry2DParallel(vol, DetectorSpec((48,), (1.0,)), 9, math.pi)
    sid = 1e5 * 32
    fan = Geometry2DFan(vol, DetectorSpec((48,), (1.0,)), 9, math.pi, sid=sid, sdd=sid + 1e-3)
    p, f = forward_parallel_2d(img, par), forward_fan_2d(img, fan)
    assert np.linalg.norm(f - p) / np.linalg.norm(p) < 1e-2


def test_sphere_principal_ray_is_diameter():
    vol = VolumeSpec((40, 40, 40), 1.0)
    geo = Geometry3DCone(vol, DetectorSpec((41, 41), (1.0, 1.0)), 4, 2 * math.pi, 300.0, 600.0)
    sino = forward_cone_3d(rasterize_primitives([sphere((0.0, 0.0, 0.0), 12.0)], vol), geo)
    np.testing.assert_allclose(sino[:, 20, 20], 24.0, atol=2 * sampling_step(geo))


def test_cone_central_row_matches_fan():
    vol2 = VolumeSpec((24, 24), 1.0)
    img = rasterize_primitives([circle((2.0, -3.0), 7.0), circle((-5.0, 4.0), 3.0, 0.7)], vol2)
    vol3 = VolumeSpec((9, 24, 24), 1.0)
    stack = np.repeat(img[None], 9, axis=0)
    cone = Geometry3DCone(vol3, DetectorSpec((5, 40), (1.0, 1.0)), 8, 2 * math.pi, 80.0, 140.0)
    fan = Geometry2DFan(vol2, DetectorSpec((40,), (1.0,)), 8, 2 * math.pi, sid=80.0, sdd=140.0)
    c, f = forward_cone_3d(stack, cone)[:, 2], forward_fan_2d(img, fan)
    assert np.linalg.norm(c - f) / np.linalg.norm(f) < 1e-2


def test_constant_sinogram_one_view_parallel():
    geo = Geometry2DParallel(VolumeSpec((8, 8), 1.0), DetectorSpec((16,), (1.0,)), 1, math.pi)
    np.testing.assert_allclose(backproject_parallel_2d(np.full((1, 16), 2.5), geo), 2.5)


def test_single_bin_backprojects_to_interpolated_stripe():
    # rows sit at y = -1.5 .. 1.5, bins at u = -2 .. 2; bin u = -1 feeds rows y = -1.5 and -0.5 by one half
    geo = Geometry2DParallel(VolumeSpec((4, 4), 1.0), DetectorSpec((5,), (1.0,)), 1, math.pi)
    sino = np.zeros((1, 5))
    sino[0, 1] = 1.0
    bp = backproject_parallel_2d(sino, geo)
    np.testing.assert_allclose(bp, np.array([0.5, 0.5, 0.0, 0.0])[:, None] * np.ones((1, 4)))


def test_fan_backprojection_iso_center_and_distance_weight():
    vol = VolumeSpec((9, 9), 1.0)
    geo = Geometry2DFan(vol, DetectorSpec((64,), (1.0,)), 6, 2 * math.pi, sid=50.0, sdd=90.0)
    bp = backproject_fan_2d(np.full(geo.sinogram_shape, 3.0), geo)
    assert bp[4, 4] == pytest.approx(6 * 3.0)
    one = Geometry2DFan(vol, DetectorSpec((64,), (1.0,)), 1, 2 * math.pi, sid=50.0, sdd=90.0)
    bp1 = backproject_fan_2d(np.full((1, 64), 3.0), one)
    x, y = vol.coordinates(1)[7], vol.coordinates(0)[2]
    u_factor = (50.0 + x) / 50.0  # view 0 looks along +x, so depth = x
    assert bp1[2, 7] == pytest.approx(3.0 / u_factor**2)


def test_cone_backprojection_iso_center_and_matrix_weight():
    vol = VolumeSpec((5, 7, 7), 1.0)
    geo = Geometry3DCone(vol, DetectorSpec((24, 24), (1.0, 1.0)), 5, 2 * math.pi, 40.0, 70.0)
    bp = backproject_cone_3d(np.full(geo.sinogram_shape, 2.0), geo)
    assert bp[2, 3, 3] == pytest.approx(5 * 2.0)
    one = Geometry3DCone(vol, DetectorSpec((24, 24), (1.0, 1.0)), 1, 2 * math.pi, 40.0, 70.0)
    bp1 = backproject_cone_3d(np.full((1, 24, 24), 2.0), one)
    z, y, x = vol.coordinates(0)[4], vol.coordinates(1)[1], vol.coordinates(2)[6]
    w = (one.projection_matrices[0] @ np.array([x, y, z, 1.0]))[2] / 40.0
    assert bp1[4, 1, 6] == pytest.approx(2.0 / w**2)


def test_voxel_behind_source_gets_nothing():
    vol = VolumeSpec((3, 3, 41), 1.0)
    geo = Geometry3DCone(vol, DetectorSpec((16, 16), (1.0, 1.0)), 1, 2 * math.pi, 10.0, 30.0)
    bp = backproject_cone_3d(np.ones((1, 16, 16)), geo)
    # view 0 puts the source at x = -10; voxels with x <= -10 are behind or at it
    assert not bp[:, :, vol.coordinates(2) <= -10].any()


def test_shape_and_type_errors(parallel_small, fan_small):
    with pytest.raises(ValueError):
        forward_parallel_2d(np.zeros((15, 16)), parallel_small)
    with pytest.raises(ValueError):
        backproject_parallel_2d(np.zeros((12, 23)), parallel_small)
    with pytest.raises(TypeError):
        forward_parallel_2d(np.zeros((16, 16)), fan_small)
    with pytest.raises(TypeError):
        backproject_fan_2d(np.zeros((12, 24)), parallel_small)
    with pytest.raises(TypeError):
        forward_project(np.zeros((4, 4)), object())


def test_approximate_adjointness_parallel():
    geo = Geometry2DParallel(VolumeSpec((32, 32), 1.0), DetectorSpec((46,), (1.0,)), 24, math.pi)
    rng = np.random.default_rng(7)
    for _ in range(5):
        x, y = rng.random((32, 32)), rng.random(geo.sinogram_shape)
        lhs = np.vdot(forward_parallel_2d(x, geo), y)
        rhs = np.vdot(x, backproject_parallel_2d(y, geo))
        assert abs(lhs - rhs) / abs(lhs) < 0.03


_GEOS = {
    "parallel": Geometry2DParallel(VolumeSpec((12, 12), 1.0), DetectorSpec((18,), (1.0,)), 5, math.pi),
    "fan": Geometry2DFan(VolumeSpec((12, 12), 1.0), DetectorSpec((24,), (1.0,)), 5, 2 * math.pi, sid=40.0,
                         sdd=70.0),
    "cone": Geometry3DCone(VolumeSpec((6, 8, 8), 1.0), DetectorSpec((10, 14), (1.0, 1.0)), 4, 2 * math.pi,
                           40.0, 70.0),
}


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(sorted(_GEOS)), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_projectors_are_linear(name, a, b, seed):
    geo = _GEOS[name]
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=geo.volume.shape), rng.normal(size=geo.volume.shape)
    fx, fy = forward_project(x, geo), forward_project(y, geo)
    lhs = forward_project(a * x + b * y, geo)
    assert np.linalg.norm(lhs - (a * fx + b * fy)) <= 1e-6 * max(1.0, np.linalg.norm(lhs))
    s, t = rng.normal(size=geo.sinogram_shape), rng.normal(size=geo.sinogram_shape)
    bs, bt = backproject(s, geo), backproject(t, geo)
    lhs = backproject(a * s + b * t, geo)
    assert np.linalg.norm(lhs - (a * bs + b * bt)) <= 1e-6 * max(1.0, np.linalg.norm(lhs))


def test_repeat_runs_are_bit_identical(cone_small):
    vol = np.random.default_rng(2).random(cone_small.volume.shape)
    assert np.array_equal(forward_cone_3d(vol, cone_small), forward_cone_3d(vol, cone_small))
