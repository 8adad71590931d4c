import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from illumkit.geometry import (Camera, depth_to_points, geometry_from_depth, look_at, pn_layer,
                               points_to_normals_offsets)


def small_camera(w=8, h=6, f=4.0):
    return Camera(f, f, (w - 1) / 2, (h - 1) / 2, w, h)


def single_pixel_camera(cx, cy, fx=1.0):
    # 1x1 image whose only pixel sits at (0, 0)
    return Camera(fx, fx, cx, cy, 1, 1)


def test_pn_layer_frontal():
    cam = single_pixel_camera(0.0, 0.0)
    g = pn_layer(np.array([[[0.0, 0.0, -1.0]]]), np.array([[2.0]]), cam)
    np.testing.assert_allclose(g.points[0, 0], [0, 0, 2])


def test_pn_layer_off_axis():
    cam = single_pixel_camera(-0.5, 0.0)      # v = (0.5, 0, 1)
    n = np.array([[[0.0, 0.0, -1.0]]])
    g = pn_layer(n, np.array([[2.0]]), cam)
    np.testing.assert_allclose(g.points[0, 0], [1, 0, 2])
    assert abs(n[0, 0] @ g.points[0, 0] + 2.0) < 1e-12


def test_pn_layer_grazing_masked():
    cam = single_pixel_camera(0.0, 0.0)      # v = (0, 0, 1)
    g = pn_layer(np.array([[[1.0, 0.0, 0.0]]]), np.array([[2.0]]), cam)
    assert not g.valid[0, 0]
    assert np.all(g.points[0, 0] == 0)


def test_pn_layer_homogeneous(rng):
    cam = small_camera()
    n = rng.normal(size=(6, 8, 3))
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    p = rng.uniform(0.5, 3, size=(6, 8))
    a = pn_layer(n, p, cam)
    b = pn_layer(n, 3.0 * p, cam)
    assert np.array_equal(a.valid, b.valid)
    np.testing.assert_allclose(b.points[a.valid], 3.0 * a.points[a.valid], rtol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, -0.05), st.floats(0.1, 10))
def test_pn_layer_plane_consistency(nx, ny, nz, p):
    n = np.array([nx, ny, nz])
    n /= np.linalg.norm(n)
    cam = small_camera()
    g = pn_layer(np.broadcast_to(n, (6, 8, 3)), np.full((6, 8), p), cam)
    assert np.all(g.residual() < 1e-6 * max(1.0, p))


def test_depth_to_points_examples():
    cam = Camera(100.0, 100.0, 10.0, 10.0, 121, 21)
    depth = np.zeros((21, 121))
    depth[10, 10] = 1.0
    depth[10, 110] = 2.0                      # fx pixels right of the principal point
    pts, valid = depth_to_points(depth, cam)
    np.testing.assert_allclose(pts[10, 10], [0, 0, 1])
    np.testing.assert_allclose(pts[10, 110], [2, 0, 2])
    assert valid.sum() == 2


def test_depth_to_points_projection_identity(rng):
    cam = look_at([0, 0, 1], [1, 0.2, 1], 40, 30, 90)
    depth = rng.uniform(0.5, 4, size=(30, 40))
    pts, valid = depth_to_points(depth, cam)
    x, y, z = cam.project(pts)
    yy, xx = np.mgrid[0:30, 0:40]
    np.testing.assert_allclose(x, xx, atol=1e-9)
    np.testing.assert_allclose(y, yy, atol=1e-9)
    np.testing.assert_allclose(z, depth, atol=1e-12)


def test_camera_validation():
    with pytest.raises(ValueError):
        Camera(0, 1, 0, 0, 4, 4)
    m = np.eye(4)
    m[0, 0] = -1                              # reflection
    with pytest.raises(ValueError):
        Camera(1, 1, 0, 0, 4, 4, m)
    m = np.eye(4)
    m[0, 1] = 0.5
    with pytest.raises(ValueError):
        Camera(1, 1, 0, 0, 4, 4, m)


def test_camera_dict_round_trip():
    cam = look_at([1, 2, 1.5], [3, 2, 1], 32, 24, 80)
    back = Camera.from_dict(cam.to_dict())
    np.testing.assert_array_equal(back.cam_to_world, cam.cam_to_world)
    assert (back.fx, back.cx, back.width, back.height) == (cam.fx, cam.cx, 32, 24)


def plane_depth(cam, planes):
    """z-depth of the nearest of several planes n.X + p = 0 (camera frame)."""
    rays = cam.rays()
    best = np.full(rays.shape[:2], np.inf)
    for n, p in planes:
        vn = rays @ np.asarray(n, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -p / vn
        t = np.where((vn < 0) & (t > 0), t, np.inf)
        best = np.minimum(best, t)
    return np.where(np.isfinite(best), best, 0.0)


def test_frontal_plane_normals():
    cam = Camera(50, 50, 31.5, 23.5, 64, 48)
    depth = np.full((48, 64), 2.0)
    pts, valid = depth_to_points(depth, cam)
    n, p, ok = points_to_normals_offsets(pts, valid)
    assert ok.all()
    np.testing.assert_allclose(n[ok], np.broadcast_to([0, 0, -1], n[ok].shape), atol=1e-6)
    np.testing.assert_allclose(p[ok], 2.0, atol=1e-6)


def test_ramp_normals():
    cam = Camera(50, 50, 31.5, 23.5, 64, 48)
    s = math.sqrt(0.5)
    depth = plane_depth(cam, [((0, -s, -s), 2.0 * s)])   # y + z = 2
    pts, valid = depth_to_points(depth, cam)
    n, p, ok = points_to_normals_offsets(pts, valid)
    assert ok.sum() > 0.9 * ok.size
    np.testing.assert_allclose(n[ok], np.broadcast_to([0, -s, -s], n[ok].shape), atol=1e-3)


def test_noisy_plane_median_normal_error():
    # fx = 32 gives ~6 cm pixel spacing at 2 m, i.e. 1 mm noise is a 1.7% slope jitter
    cam = Camera(32, 32, 31.5, 23.5, 64, 48)
    rng = np.random.default_rng(7)
    depth = 2.0 + rng.normal(0.0, 1e-3, size=(48, 64))
    pts, valid = depth_to_points(depth, cam)
    n, _, ok = points_to_normals_offsets(pts, valid)
    ang = np.degrees(np.arccos(np.clip(-n[ok][:, 2], -1, 1)))
    assert np.median(ang) < 1.0


def three_plane_scene():
    """Camera looking into the corner formed by a floor and two walls."""
    cam = look_at([0.5, 0.5, 1.2], [3, 3, 0.6], 320, 256, 90)
    planes_world = [((0, 0, 1), 0.0), ((-1, 0, 0), 3.5), ((0, -1, 0), 3.0)]   # z=0, x=3.5, y=3
    r, c = cam.rotation, cam.center
    planes = []
    for n, p in planes_world:
        n = np.asarray(n, dtype=float)
        # n.X + p = 0 with X = R Xc + c  ->  (R^T n).Xc + (n.c + p) = 0
        nc = r.T @ n
        pc = n @ c + p
        if pc < 0:
            nc, pc = -nc, -pc
        planes.append((nc, pc))
    return cam, plane_depth(cam, planes)


def test_three_plane_round_trip():
    cam, depth = three_plane_scene()
    assert (depth > 0).all()
    pts, valid = depth_to_points(depth, cam)
    g = geometry_from_depth(depth, cam)
    err = np.linalg.norm(g.points - pts, axis=-1)
    good = g.valid & (err < 1e-4)
    assert good.sum() >= 0.99 * valid.sum()
    assert np.all(g.residual() < 1e-6)


def test_insufficient_neighbourhood_masked():
    cam = Camera(20, 20, 7.5, 5.5, 16, 12)
    depth = np.full((12, 16), 2.0)
    depth[::2, :] = 0.0                       # every other row missing
    pts, valid = depth_to_points(depth, cam)
    n, p, ok = points_to_normals_offsets(pts, valid)
    assert not ok.any()
