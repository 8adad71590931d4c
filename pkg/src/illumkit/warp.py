"""Geometry-aware warping of a perspective observation onto a locale's sphere."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import panorama as pano
from .geometry import Camera, GeometryMap
from .panorama import Locale, PanoramaImage

LOCALE_HEIGHT = 0.10


class SingularityError(ValueError):
    """Jacobian requested at a pole of the spherical parameterization or at the locale."""


@dataclass(eq=False)
class WarpRequest:
    image: np.ndarray
    geometry: GeometryMap
    camera: Camera
    locale: Locale
    kind: str = "ldr"

    def __post_init__(self):
        shape = (self.camera.height, self.camera.width)
        if self.image.shape[:2] != shape or self.geometry.points.shape[:2] != shape:
            raise ValueError("image, geometry and camera dimensions disagree")


@dataclass(eq=False)
class WarpedPanorama:
    color: PanoramaImage
    distance: PanoramaImage
    mask: PanoramaImage

    @property
    def observed(self) -> np.ndarray:
        return self.mask.data[:, :, 0] > 0.5


def depth_tolerance(depth):
    """Occlusion test slack: 2 cm or 2% of the stored depth, whichever is larger."""
    return np.maximum(0.02, 0.02 * np.asarray(depth, dtype=np.float64))


def locale_from_pixel(geometry: GeometryMap, camera: Camera, pixel) -> Locale:
    """Locale 10 cm above the surface seen at ``pixel`` (column, row)."""
    x, y = int(pixel[0]), int(pixel[1])
    if not (0 <= x < camera.width and 0 <= y < camera.height):
        raise IndexError(f"pixel {pixel} outside the {camera.width}x{camera.height} image")
    if not geometry.valid[y, x]:
        raise ValueError(f"no valid geometry at pixel {pixel}")
    p_world = camera.to_world(geometry.points[y, x])
    n_world = camera.dirs_to_world(geometry.normals[y, x])
    n_world = n_world / np.linalg.norm(n_world)
    return Locale(p_world + LOCALE_HEIGHT * n_world, n_world)


def splat(points_world: np.ndarray, values: np.ndarray, locale: Locale, height: int, width: int):
    """Nearest-point-wins point splatting onto the locale's panorama.

    ``points_world`` is (N, 3) and ``values`` (N, C). Returns ``(color, dist, hit)``
    where ``color`` is (H, W, C) with the sentinel in empty pixels.
    """
    rel = points_world - locale.position
    r = np.linalg.norm(rel, axis=1)
    if np.any(r <= 1e-6):
        raise ValueError("a source point coincides with the locale")
    ui, vi = pano.direction_to_index(rel, height, width, locale)
    flat = vi * width + ui
    # sort by pixel, then by distance: first entry of each run is the nearest
    order = np.lexsort((r, flat))
    flat_s = flat[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = flat_s[1:] != flat_s[:-1]
    win = order[first]
    c = values.shape[1]
    color = np.full((height * width, c), pano.SENTINEL)
    dist = np.full(height * width, pano.SENTINEL)
    color[flat[win]] = values[win]
    dist[flat[win]] = r[win]
    hit = np.zeros(height * width, dtype=bool)
    hit[flat[win]] = True
    return color.reshape(height, width, c), dist.reshape(height, width), hit.reshape(height, width)


def forward_warp(req: WarpRequest, height: int = pano.DEFAULT_HEIGHT, width: int = pano.DEFAULT_WIDTH) -> WarpedPanorama:
    """Forward-project every valid source pixel onto the panorama around the locale."""
    g = req.geometry
    img = req.image if req.image.ndim == 3 else req.image[:, :, None]
    valid = g.valid
    pts = req.camera.to_world(g.points[valid])
    vals = img[valid].astype(np.float64)
    if len(pts) == 0:
        c = img.shape[2]
        color = np.full((height, width, c), pano.SENTINEL)
        dist = np.full((height, width), pano.SENTINEL)
        hit = np.zeros((height, width), dtype=bool)
    else:
        color, dist, hit = splat(pts, vals, req.locale, height, width)
    return WarpedPanorama(
        PanoramaImage(color, req.kind, req.locale),
        PanoramaImage(dist, "distance", req.locale),
        PanoramaImage(hit.astype(np.float64), "mask", req.locale),
    )


def spherical_coords(X, locale: Locale):
    """(phi, theta) of ``X - position`` in the locale frame."""
    return pano.direction_to_spherical(np.asarray(X, dtype=np.float64) - locale.position, locale)


def warp_jacobian(X, locale: Locale, pole_eps: float = 1e-9) -> np.ndarray:
    """Analytic 2x3 Jacobian d(phi, theta)/dX of the warp for a world point X.

    With ``q = X - position`` expressed as (x, y, z) in the locale frame,
    ``rho = sqrt(x^2 + y^2)`` and ``r = |q|``::

        dphi/dq   = (-y a + x b) / rho^2
        dtheta/dq = (z q / r^2 - up) / rho

    Raises SingularityError at the poles (rho ~ 0) and at the locale itself.
    """
    q = np.asarray(X, dtype=np.float64).reshape(3) - locale.position
    r2 = q @ q
    if r2 <= 0.0:
        raise SingularityError("point coincides with the locale")
    a, b, up = locale.azimuth_ref, locale.side, locale.up
    x, y, z = q @ a, q @ b, q @ up
    rho2 = x * x + y * y
    if rho2 <= (pole_eps * pole_eps) * r2:
        raise SingularityError("spherical Jacobian is undefined at the poles")
    rho = np.sqrt(rho2)
    dphi = (-y * a + x * b) / rho2
    dtheta = (z * q / r2 - up) / rho
    return np.stack([dphi, dtheta])


def visibility_check(locale: Locale, camera: Camera, depth) -> bool:
    """True if the locale projects into the image, in front of the camera and unoccluded.

    A pixel with missing depth (0) does not occlude.
    """
    pc = camera.to_camera(np.asarray(locale.position, dtype=np.float64))
    x, y, z = camera.project(pc)
    if not z > 0:
        return False
    xi, yi = int(np.round(x)), int(np.round(y))
    if not (0 <= xi < camera.width and 0 <= yi < camera.height):
        return False
    stored = float(np.asarray(depth)[yi, xi])
    if stored <= 0 or not np.isfinite(stored):
        return True
    return bool(z <= stored + depth_tolerance(stored))
