import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from illumkit.hdr import gamma_view
from illumkit.shading import (average_pool, average_pool_adjoint, diffuse_convolve, diffuse_convolve_adjoint,
                              relight_sphere)


def naive_diffuse(H):
    """Direct double sum over every pixel pair, written from the defining formula."""
    h, w = H.shape[:2]
    dirs = []
    for v in range(h):
        for u in range(w):
            phi = (u + 0.5) * 2 * math.pi / w
            th = (v + 0.5) * math.pi / h
            dirs.append((math.sin(th) * math.cos(phi), math.sin(th) * math.sin(phi), math.cos(th),
                         (2 * math.pi / w) * (math.pi / h) * math.sin(th), v, u))
    out = np.zeros_like(H)
    for ni in dirs:
        acc = np.zeros(H.shape[2])
        K = 0.0
        for wj in dirs:
            c = ni[0] * wj[0] + ni[1] * wj[1] + ni[2] * wj[2]
            if c > 1e-12:         # horizon pixels (cosine 0 up to rounding) are excluded
                acc += H[wj[4], wj[5]] * wj[3] * c
                K += wj[3]
        out[ni[4], ni[5]] = acc / K
    return out


def test_constant_is_half():
    for c in (1.0, 0.37):
        D = diffuse_convolve(np.full((160, 320, 3), c))
        assert D.shape == (40, 80, 3)
        np.testing.assert_allclose(D, c / 2, rtol=5e-3)


def test_naive_oracle_10x20(rng):
    H = rng.exponential(size=(10, 20, 3))
    np.testing.assert_allclose(diffuse_convolve(H, None), naive_diffuse(H), rtol=0, atol=1e-12)


def test_column_shift_equivariance_exact(rng):
    H = rng.exponential(size=(20, 40, 3))
    D = diffuse_convolve(H, None)
    for k in range(40):
        assert np.array_equal(diffuse_convolve(np.roll(H, k, axis=1), None), np.roll(D, k, axis=1))


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.integers(0, 2 ** 31))
def test_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    H1 = rng.exponential(size=(20, 40, 3))
    H2 = rng.exponential(size=(20, 40, 3))
    lhs = diffuse_convolve(a * H1 + b * H2, (10, 20))
    rhs = a * diffuse_convolve(H1, (10, 20)) + b * diffuse_convolve(H2, (10, 20))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-6, atol=1e-300)


def test_positivity(rng):
    H = rng.exponential(size=(40, 80, 3)) * (rng.uniform(size=(40, 80, 1)) > 0.7)
    assert np.all(diffuse_convolve(H) >= 0)


def test_bright_pixel_support():
    H = np.zeros((20, 40))
    H[6, 13] = 100.0
    D = diffuse_convolve(H, None)
    assert np.unravel_index(np.argmax(D), D.shape) == (6, 13)
    th = (np.arange(20) + 0.5) * math.pi / 20
    ph = (np.arange(40) + 0.5) * 2 * math.pi / 40
    d = np.array([math.sin(th[6]) * math.cos(ph[13]), math.sin(th[6]) * math.sin(ph[13]), math.cos(th[6])])
    n = np.stack([np.sin(th)[:, None] * np.cos(ph), np.sin(th)[:, None] * np.sin(ph),
                  np.cos(th)[:, None] * np.ones(40)], -1)
    assert np.all(D[n @ d <= 0] == 0)
    assert np.all(D[n @ d > 1e-9] > 0)


def test_work_dims_must_divide():
    with pytest.raises(ValueError):
        diffuse_convolve(np.ones((160, 320)), (30, 80))
    with pytest.raises(ValueError):
        average_pool(np.ones((10, 20)), (20, 40))


def test_adjoint_dot_product(rng):
    x = rng.normal(size=(20, 40, 3))
    y = rng.normal(size=(10, 20, 3))
    lhs = np.sum(diffuse_convolve(x, (10, 20)) * y)
    rhs = np.sum(x * diffuse_convolve_adjoint(y, (20, 40)))
    assert lhs == pytest.approx(rhs, rel=1e-12)
    g = rng.normal(size=(5, 10))
    f = rng.normal(size=(20, 40))
    assert np.sum(average_pool(f, (5, 10)) * g) == pytest.approx(np.sum(f * average_pool_adjoint(g, (20, 40))),
                                                                  rel=1e-12)


def test_relight_constant_mirror():
    img = relight_sphere(np.full((40, 80, 3), 0.3), "mirror", 64)
    inside = img[..., 3] == 1
    assert inside.sum() > 0.7 * 64 * 64
    np.testing.assert_allclose(img[inside][:, :3], gamma_view(0.3, exposure=1.0), rtol=1e-12)
    assert np.all(img[~inside] == 0)


def test_relight_constant_diffuse():
    img = relight_sphere(np.full((40, 80, 3), 0.3), "diffuse", 64)
    inside = img[..., 3] == 1
    np.testing.assert_allclose(img[inside][:, :3], gamma_view(0.15, exposure=1.0), rtol=5e-3)


def test_relight_top_light():
    H = np.zeros((40, 80, 3))
    H[0] = 50.0
    img = relight_sphere(H, "diffuse", 65, exposure=0.05)
    lum = np.where(img[..., 3] == 1, img[..., :3].sum(-1), -1)
    r, c = np.unravel_index(np.argmax(lum), lum.shape)
    # the brightest value is reached at the top of the sphere and falls off going down
    assert r <= 2
    col = lum[:, 32]
    assert lum.max() == pytest.approx(col[0], rel=1e-3)
    inside = col >= 0
    assert np.all(np.diff(col[inside][:20]) <= 1e-12)


def test_relight_unknown_material():
    with pytest.raises(ValueError):
        relight_sphere(np.ones((10, 20, 3)), "glossy", 16)
