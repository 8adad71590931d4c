"""Analytic box-room scenes: exact ray casting for oracles and test fixtures."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import panorama as pano
from .geometry import Camera, look_at
from .ibr import LabeledPointSet, View
from .panorama import Locale

# face order: -x, +x, -y, +y, floor (-z), ceiling (+z)
DEFAULT_FACE_RADIANCE = np.array([
    [0.020, 0.010, 0.010],
    [0.010, 0.020, 0.010],
    [0.010, 0.010, 0.020],
    [0.020, 0.020, 0.010],
    [0.008, 0.006, 0.004],
    [0.030, 0.030, 0.030],
])


@dataclass
class BoxRoom:
    """Axis-aligned box with a constant radiance per face and optional ceiling lights.

    ``lights`` holds ``(xmin, xmax, ymin, ymax, rgb)`` rectangles on the ceiling.
    """

    size: Sequence[float] = (4.0, 4.0, 3.0)
    face_radiance: np.ndarray = field(default_factory=lambda: DEFAULT_FACE_RADIANCE.copy())
    lights: List[tuple] = field(default_factory=list)

    @property
    def lo(self) -> np.ndarray:
        return np.zeros(3)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.size, dtype=np.float64)

    @property
    def center(self) -> np.ndarray:
        return self.hi / 2.0

    def cast(self, origins: np.ndarray, dirs: np.ndarray):
        """Cast rays from points inside the box; returns ``(t, face, hit_points)``."""
        o = np.broadcast_to(origins, dirs.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = (self.lo - o) / dirs
            t_hi = (self.hi - o) / dirs
        t_axis = np.where(dirs > 0, t_hi, np.where(dirs < 0, t_lo, np.inf))
        axis = np.argmin(t_axis, axis=-1)
        t = np.take_along_axis(t_axis, axis[..., None], axis=-1)[..., 0]
        sign = np.take_along_axis(dirs, axis[..., None], axis=-1)[..., 0] > 0
        face = 2 * axis + sign.astype(np.int64)
        return t, face, o + t[..., None] * dirs

    def radiance(self, face: np.ndarray, pts: np.ndarray) -> np.ndarray:
        rad = self.face_radiance[face].copy()
        for xmin, xmax, ymin, ymax, rgb in self.lights:
            on = (face == 5) & (pts[..., 0] >= xmin) & (pts[..., 0] <= xmax) \
                & (pts[..., 1] >= ymin) & (pts[..., 1] <= ymax)
            rad[on] = rgb
        return rad

    def ray_cast_panorama(self, locale: Locale, height: int = pano.DEFAULT_HEIGHT,
                          width: int = pano.DEFAULT_WIDTH):
        """Exact radiance and distance seen from the locale at every pixel center."""
        dirs = pano.direction_grid(height, width, locale)
        t, face, pts = self.cast(locale.position, dirs)
        return self.radiance(face, pts), t

    def render_view(self, camera: Camera):
        """Exact HDR image and z-depth for a pinhole camera inside the room."""
        rays = camera.rays()
        dirs = camera.dirs_to_world(rays)
        t, face, pts = self.cast(camera.center, dirs)
        # rays have unit camera-z, so the ray parameter is the z-depth
        return self.radiance(face, pts), t

    def labeled_points(self, spacing: float = 0.1, shelf: Optional[tuple] = None) -> LabeledPointSet:
        """Grid samples of floor (``floor``), walls and ceiling (``other``).

        ``shelf = (xmin, xmax, ymin, ymax, z)`` adds a horizontal furniture slab
        (upward normals on top, downward underneath).
        """
        sx, sy, sz = self.hi
        pts, nrm, lab = [], [], []

        def grid(a, b):
            na = max(int(round(a / spacing)), 1)
            nb = max(int(round(b / spacing)), 1)
            ga = (np.arange(na) + 0.5) * (a / na)
            gb = (np.arange(nb) + 0.5) * (b / nb)
            return np.meshgrid(ga, gb, indexing="ij")

        gx, gy = grid(sx, sy)
        pts.append(np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], 1))
        nrm.append(np.tile([0.0, 0.0, 1.0], (gx.size, 1)))
        lab += ["floor"] * gx.size
        pts.append(np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, sz)], 1))
        nrm.append(np.tile([0.0, 0.0, -1.0], (gx.size, 1)))
        lab += ["other"] * gx.size
        for axis, size_a in ((0, sy), (1, sx)):
            ga, gz = grid(size_a, sz)
            for val, nsign in ((0.0, 1.0), (self.hi[axis], -1.0)):
                p = np.zeros((ga.size, 3))
                p[:, axis] = val
                p[:, 1 - axis] = ga.ravel()
                p[:, 2] = gz.ravel()
                n = np.zeros((ga.size, 3))
                n[:, axis] = nsign
                pts.append(p)
                nrm.append(n)
                lab += ["other"] * ga.size
        if shelf is not None:
            xmin, xmax, ymin, ymax, z = shelf
            gx, gy = grid(xmax - xmin, ymax - ymin)
            gx = gx + xmin
            gy = gy + ymin
            for nz in (1.0, -1.0):
                pts.append(np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)], 1))
                nrm.append(np.tile([0.0, 0.0, nz], (gx.size, 1)))
                lab += ["furniture"] * gx.size
        return LabeledPointSet(np.concatenate(pts), np.concatenate(nrm), lab)


def default_cameras(room: BoxRoom, n: int = 4, width: int = 320, height: int = 256,
                    fov_x_deg: float = 100.0, eye_height: float = 1.5, tilt_deg: float = 0.0,
                    inset: float = 0.05) -> List[Camera]:
    """Cameras near the middle of the walls looking across the room (optionally tilted down)."""
    c = room.center
    hi = room.hi
    spots = [
        (np.array([inset, c[1], eye_height]), np.array([1.0, 0.0])),
        (np.array([hi[0] - inset, c[1], eye_height]), np.array([-1.0, 0.0])),
        (np.array([c[0], inset, eye_height]), np.array([0.0, 1.0])),
        (np.array([c[0], hi[1] - inset, eye_height]), np.array([0.0, -1.0])),
    ]
    if not 1 <= n <= 4:
        raise ValueError("between 1 and 4 default cameras")
    tan_t = np.tan(np.radians(tilt_deg))
    cams = []
    for eye, fwd in spots[:n]:
        target = eye + np.array([fwd[0], fwd[1], -tan_t])
        cams.append(look_at(eye, target, width, height, fov_x_deg))
    return cams


def render_views(room: BoxRoom, cameras: Sequence[Camera]) -> List[View]:
    from .hdr import h_to_j

    views = []
    for k, cam in enumerate(cameras):
        hdr_img, depth = room.render_view(cam)
        views.append(View(hdr_img, depth, cam, ldr=h_to_j(hdr_img), name=f"view{k}"))
    return views


def write_room_fixture(out_dir, room: Optional[BoxRoom] = None, n_cameras: int = 4, width: int = 320,
                       height: int = 256, shelf: Optional[tuple] = None):
    """Write a complete scene (HDR PFM, 16-bit LDR PNG, depth PFM, points, manifest).

    Returns the manifest path. A ``shelf`` slab, if given, exists only in the
    labeled point set; the rendered images always show the empty box.
    """
    from pathlib import Path

    from . import io

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    room = room or BoxRoom()
    cams = default_cameras(room, n_cameras, width, height)
    entries = []
    for k, view in enumerate(render_views(room, cams)):
        hdr_p = out / f"view{k}_hdr.pfm"
        ldr_p = out / f"view{k}_ldr.png"
        dep_p = out / f"view{k}_depth.pfm"
        io.write_pfm(hdr_p, view.hdr)
        io.write_png16(ldr_p, view.ldr)
        io.write_pfm(dep_p, view.depth)
        entries.append(io.ImageEntry(hdr_p, ldr_p, dep_p, view.camera))
    pts_p = out / "points.json"
    io.write_points(pts_p, room.labeled_points(shelf=shelf))
    manifest = out / "manifest.json"
    io.write_manifest(manifest, io.SceneManifest("box-room", entries, pts_p, out))
    return manifest
