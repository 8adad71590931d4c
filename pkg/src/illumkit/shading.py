"""Diffuse convolution of illumination maps and sphere relighting."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import hdr
from . import panorama as pano

DEFAULT_WORK_DIMS = (40, 80)
HORIZON_EPS = 1e-12


def average_pool(img: np.ndarray, work_dims) -> np.ndarray:
    """Block-average an (H, W[, C]) map down to ``work_dims`` (integer factors only)."""
    h, w = img.shape[:2]
    th, tw = work_dims
    if th > h or tw > w:
        raise ValueError(f"work_dims {work_dims} exceed map size {(h, w)}")
    if h % th or w % tw:
        raise ValueError(f"work_dims {work_dims} must divide the map size {(h, w)}")
    fh, fw = h // th, w // tw
    return img.reshape(th, fh, tw, fw, *img.shape[2:]).mean(axis=(1, 3))


def average_pool_adjoint(g: np.ndarray, full_dims) -> np.ndarray:
    h, w = full_dims
    th, tw = g.shape[:2]
    fh, fw = h // th, w // tw
    return np.repeat(np.repeat(g, fh, axis=0), fw, axis=1) / (fh * fw)


@lru_cache(maxsize=8)
def _kernel(height: int, width: int) -> np.ndarray:
    """kern[vi, vj, k]: weight of input pixel (vj, ui + k) for output pixel (vi, ui).

    The weight is s(w) (w . n_i) / K_i over the open hemisphere w . n_i > 0, with
    K_i the solid angle of the pixels in that hemisphere. It depends on the
    column difference only, which makes the operator exactly equivariant under
    column shifts.
    """
    theta = (np.arange(height) + 0.5) * (np.pi / height)
    st, ct = np.sin(theta), np.cos(theta)
    cphi = np.cos(np.arange(width) * (2.0 * np.pi / width))
    cos = st[:, None, None] * st[None, :, None] * cphi[None, None, :] + ct[:, None, None] * ct[None, :, None]
    s = pano.solid_angle(np.arange(height), height, width)
    # directions exactly on the horizon (up to rounding) are left out of the open hemisphere
    pos = cos > HORIZON_EPS
    K = np.where(pos, s[None, :, None], 0.0).sum(axis=(1, 2))
    kern = np.where(pos, s[None, :, None] * cos, 0.0) / K[:, None, None]
    kern.setflags(write=False)
    return kern


def _apply(kern: np.ndarray, H: np.ndarray, sign: int) -> np.ndarray:
    h, w = H.shape[:2]
    cols = (np.arange(w)[None, :] + sign * np.arange(w)[:, None]) % w    # [k, u]
    out = np.zeros((kern.shape[0] if sign > 0 else kern.shape[1], w, H.shape[2]))
    for j in range(h):
        g = H[j][cols]                                                    # (k, u, C)
        if sign > 0:
            # out[vi, u] += sum_k kern[vi, j, k] * H[j, u + k]
            out += (kern[:, j, :, None, None] * g[None]).sum(axis=1)
        else:
            # adjoint: out[vj, u] += sum_k kern[j, vj, k] * G[j, u - k]
            out += (kern[j, :, :, None, None] * g[None]).sum(axis=1)
    return out


def diffuse_convolve_raw(H: np.ndarray) -> np.ndarray:
    """Diffuse convolution at the map's own resolution (no pooling)."""
    H = np.asarray(H, dtype=np.float64)
    squeeze = H.ndim == 2
    if squeeze:
        H = H[:, :, None]
    h, w = H.shape[:2]
    out = _apply(_kernel(h, w), H, +1)
    return out[:, :, 0] if squeeze else out


def diffuse_convolve_raw_adjoint(G: np.ndarray) -> np.ndarray:
    G = np.asarray(G, dtype=np.float64)
    squeeze = G.ndim == 2
    if squeeze:
        G = G[:, :, None]
    h, w = G.shape[:2]
    out = _apply(_kernel(h, w), G, -1)
    return out[:, :, 0] if squeeze else out


def diffuse_convolve(H, work_dims=DEFAULT_WORK_DIMS) -> np.ndarray:
    """Cosine-weighted hemispherical average of radiance around every pixel direction.

    ``D(H, i) = (1/K_i) sum_{w in Omega_i} H(w) s(w) (w . n_i)`` where ``Omega_i``
    is the hemisphere around pixel i's direction ``n_i`` and ``K_i`` the sum of
    its pixels' solid angles. Note that K_i is *not* cosine weighted, so a
    uniform environment of value c yields c / 2.

    The map is average-pooled to ``work_dims`` first and the result is returned
    at that resolution. Pass ``work_dims=None`` to skip pooling.
    """
    H = np.asarray(H, dtype=np.float64)
    if work_dims is not None and tuple(work_dims) != H.shape[:2]:
        H = average_pool(H, work_dims)
    return diffuse_convolve_raw(H)


def diffuse_convolve_adjoint(G, full_dims) -> np.ndarray:
    """Transpose of :func:`diffuse_convolve` (pool then convolve), for gradients."""
    G = np.asarray(G, dtype=np.float64)
    back = diffuse_convolve_raw_adjoint(G)
    if tuple(full_dims) != G.shape[:2]:
        back = average_pool_adjoint(back, full_dims)
    return back


def _sphere_normals(size: int, locale=None):
    """Unit normals of an orthographic sphere seen from the azimuth_ref side."""
    c = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    x, y = np.meshgrid(c, -c)
    r2 = x * x + y * y
    inside = r2 <= 1.0
    zf = np.sqrt(np.clip(1.0 - r2, 0.0, None))
    # image right = side axis, image up = up axis, toward the viewer = azimuth_ref
    n_local = np.stack([zf, x, y], axis=-1)
    return n_local, inside


def relight_sphere(H, material: str = "mirror", size: int = 256, gamma: float = 3.3,
                   exposure=1.0, work_dims=DEFAULT_WORK_DIMS) -> np.ndarray:
    """Render a mirror or perfectly diffuse sphere lit by the illumination map.

    The viewer looks along ``-azimuth_ref`` with the locale's up axis pointing up
    in the image. Returns an (size, size, 4) float RGBA image in [0, 1]; pixels
    outside the sphere have alpha 0. Directions are expressed in the map's own
    (locale) frame.
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim == 2:
        H = H[:, :, None]
    n, inside = _sphere_normals(size)
    if material == "mirror":
        view = np.array([-1.0, 0.0, 0.0])
        refl = view - 2.0 * (n @ view)[..., None] * n
        d = refl[inside]
        rad = pano.sample_direction(H, d)
    elif material == "diffuse":
        D = diffuse_convolve(H, work_dims)
        rad = pano.sample_direction(D, n[inside])
    else:
        raise ValueError(f"unknown material {material!r}")
    c = H.shape[2]
    rgb = np.zeros((size, size, c))
    rgb[inside] = hdr.gamma_view(rad, gamma=gamma, exposure=exposure)
    if c == 1:
        rgb = np.repeat(rgb, 3, axis=2)
    alpha = inside.astype(np.float64)[..., None]
    return np.concatenate([rgb, alpha], axis=2)
