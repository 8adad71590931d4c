"""Ground-truth illumination maps from registered HDR RGB-D images.

Locales are sampled on upward-facing floor/furniture points; each map is then
built in two passes: a min-distance geometry pass over forward-warped depth,
followed by reverse-mapped HDR resampling blended with 1/d^4 weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import panorama as pano
from .geometry import Camera, depth_to_points
from .panorama import Locale, PanoramaImage
from .warp import LOCALE_HEIGHT, depth_tolerance, splat, visibility_check

SUPPORT_LABELS = ("floor", "furniture")
LABELS = ("floor", "furniture", "other")


@dataclass(eq=False)
class LabeledPointSet:
    points: np.ndarray
    normals: np.ndarray
    labels: Sequence[str]

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        n = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if len(n) != len(self.points) or len(self.labels) != len(self.points):
            raise ValueError("points, normals and labels must have the same length")
        if not np.all(np.isfinite(self.points)) or not np.all(np.isfinite(n)):
            raise ValueError("point set contains non-finite values")
        norms = np.linalg.norm(n, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero-length normal in point set")
        self.normals = n / norms[:, None]
        self.labels = [str(x) for x in self.labels]

    def __len__(self):
        return len(self.points)


@dataclass
class LocaleSamplingParams:
    height: float = LOCALE_HEIGHT
    clearance_radius: float = 0.10
    contact_tolerance: float = 0.01
    min_separation: float = 0.50
    max_tilt: float = np.pi / 8
    labels: tuple = SUPPORT_LABELS


@dataclass(eq=False)
class View:
    """One registered HDR RGB-D observation."""

    hdr: np.ndarray
    depth: np.ndarray
    camera: Camera
    ldr: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        shape = (self.camera.height, self.camera.width)
        if self.depth.shape != shape or self.hdr.shape[:2] != shape:
            raise ValueError(f"view {self.name!r}: image/depth size does not match the camera")


@dataclass
class SampledLocale:
    locale: Locale
    support_index: int

    def to_dict(self) -> dict:
        return {**self.locale.to_dict(), "support_index": self.support_index}


def sample_locales(scene: LabeledPointSet, params: LocaleSamplingParams = LocaleSamplingParams()) -> List[SampledLocale]:
    """Greedy locale placement in input point order.

    A point yields a locale 10 cm along its normal when the normal is within
    ``max_tilt`` of vertical, its label is a support label, no scene point lies
    closer than ``clearance_radius - contact_tolerance`` to the locale, and no
    already accepted locale is closer than ``min_separation``.
    """
    if len(scene) == 0:
        return []
    tree = cKDTree(scene.points)
    cos_tilt = np.cos(params.max_tilt)
    inner = params.clearance_radius - params.contact_tolerance
    out: List[SampledLocale] = []
    accepted = np.empty((0, 3))
    for i in range(len(scene)):
        n = scene.normals[i]
        if not n[2] > cos_tilt or scene.labels[i] not in params.labels:
            continue
        c = scene.points[i] + params.height * n
        if accepted.size and np.min(np.linalg.norm(accepted - c, axis=1)) < params.min_separation:
            continue
        # strictly inside the shrunken ball
        near = tree.query_ball_point(c, inner)
        if any(np.linalg.norm(scene.points[j] - c) < inner for j in near):
            continue
        out.append(SampledLocale(Locale(c, n), i))
        accepted = np.vstack([accepted, c])
    return out


def visible_views(views: Sequence[View], locale: Locale) -> List[View]:
    return [v for v in views if visibility_check(locale, v.camera, v.depth)]


def warp_distance(view: View, locale: Locale, height: int, width: int):
    """Forward-warped distance map of one view: (dist, hit)."""
    pts, valid = depth_to_points(view.depth, view.camera)
    world = view.camera.to_world(pts[valid])
    if len(world) == 0:
        return np.full((height, width), pano.SENTINEL), np.zeros((height, width), dtype=bool)
    _, dist, hit = splat(world, np.zeros((len(world), 1)), locale, height, width)
    return dist, hit


def build_distance_map(views: Sequence[View], locale: Locale, height: int = pano.DEFAULT_HEIGHT,
                       width: int = pano.DEFAULT_WIDTH, tol: float = 1e-4, max_iter: int = 500,
                       use_visibility: bool = True) -> PanoramaImage:
    """Per-direction minimum distance over all visible views, holes interpolated."""
    if use_visibility:
        views = visible_views(views, locale)
    if not views:
        raise ValueError("no view sees the locale")
    best = np.full((height, width), np.inf)
    for v in views:
        dist, hit = warp_distance(v, locale, height, width)
        best = np.where(hit, np.minimum(best, dist), best)
    known = np.isfinite(best)
    if not known.any():
        raise ValueError("no depth sample reaches the locale's panorama")
    filled = pano.fill_holes(np.where(known, best, 0.0), known, tol=tol, max_iter=max_iter)
    return PanoramaImage(filled, "distance", locale)


def blend_weights(distances) -> np.ndarray:
    """Normalized 1/d^4 weights."""
    d = np.asarray(distances, dtype=np.float64)
    w = 1.0 / d ** 4
    return w / w.sum()


def bilinear_image(img: np.ndarray, x, y) -> np.ndarray:
    """Bilinear lookup in a perspective image at pixel-index coordinates (clamped)."""
    h, w = img.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), w - 2) if w > 1 else np.zeros(np.shape(x), np.int64)
    y0 = np.minimum(np.floor(y).astype(np.int64), h - 2) if h > 1 else np.zeros(np.shape(y), np.int64)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def render_illumination(views: Sequence[View], locale: Locale, distance_map,
                        use_visibility: bool = True) -> PanoramaImage:
    """Reverse-map every panorama pixel into the views and blend with 1/d^4 weights.

    ``d`` is the distance from each view's camera center to the locale. A view
    contributes to a pixel when the reconstructed point projects inside it, in
    front of the camera, and passes the depth test (missing depth never
    occludes). Pixels without any contribution get the -1 sentinel.
    """
    dist = np.asarray(getattr(distance_map, "data", distance_map), dtype=np.float64)
    if dist.ndim == 3:
        dist = dist[:, :, 0]
    if np.any(dist < 0) or not np.all(np.isfinite(dist)):
        raise ValueError("distance map must be hole-free and non-negative")
    if use_visibility:
        views = visible_views(views, locale)
    h, w = dist.shape
    dirs = pano.direction_grid(h, w, locale)
    X = locale.position + dist[..., None] * dirs
    channels = views[0].hdr.shape[2] if views and views[0].hdr.ndim == 3 else 1
    contribs = []
    wsum = np.zeros((h, w))
    for v in views:
        cam = v.camera
        x, y, z = cam.project(cam.to_camera(X))
        ok = (z > 0) & (x >= 0) & (x <= cam.width - 1) & (y >= 0) & (y <= cam.height - 1)
        xs, ys, zs = x[ok], y[ok], z[ok]
        stored = v.depth[np.round(ys).astype(np.int64), np.round(xs).astype(np.int64)]
        pass_depth = (stored <= 0) | (zs <= stored + depth_tolerance(stored))
        idx = np.nonzero(ok)
        idx = (idx[0][pass_depth], idx[1][pass_depth])
        img = v.hdr if v.hdr.ndim == 3 else v.hdr[:, :, None]
        col = bilinear_image(img.astype(np.float64), xs[pass_depth], ys[pass_depth])
        wk = 1.0 / np.linalg.norm(cam.center - locale.position) ** 4
        wsum[idx] += wk
        contribs.append((idx, col, wk))
    # normalize the weights before mixing so equal weights reproduce the mean exactly
    acc = np.zeros((h, w, channels))
    for idx, col, wk in contribs:
        acc[idx] += (wk / wsum[idx])[:, None] * col
    covered = wsum > 0
    out = np.where(covered[..., None], acc, pano.SENTINEL)
    return PanoramaImage(out, "hdr", locale)


def generate_illumination(views: Sequence[View], locale: Locale, height: int = pano.DEFAULT_HEIGHT,
                          width: int = pano.DEFAULT_WIDTH):
    """Both passes; returns ``(illumination, distance_map)``."""
    dmap = build_distance_map(views, locale, height, width)
    return render_illumination(views, locale, dmap), dmap
