"""Per-pixel plane geometry of a perspective observation.

Camera frame: x right, y down, +z along the viewing direction. Pixel ``(x, y)``
is a column/row index; its ray is ``v = ((x - cx)/fx, (y - cy)/fy, 1)``.
Planes are written ``n . X + p = 0`` with normals facing the camera, so
``p >= 0`` for visible surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRAZE_EPS = 1e-4


@dataclass(eq=False)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    cam_to_world: np.ndarray = None

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.cam_to_world is None:
            self.cam_to_world = np.eye(4)
        m = np.asarray(self.cam_to_world, dtype=np.float64).reshape(4, 4)
        r = m[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise ValueError("cam_to_world rotation block is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("cam_to_world must be a proper rotation (det = +1)")
        if not np.allclose(m[3], [0, 0, 0, 1]):
            raise ValueError("cam_to_world bottom row must be (0, 0, 0, 1)")
        self.cam_to_world = m
        self.width = int(self.width)
        self.height = int(self.height)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def rotation(self) -> np.ndarray:
        return self.cam_to_world[:3, :3]

    @property
    def center(self) -> np.ndarray:
        return self.cam_to_world[:3, 3].copy()

    @property
    def world_to_cam(self) -> np.ndarray:
        r = self.rotation
        out = np.eye(4)
        out[:3, :3] = r.T
        out[:3, 3] = -r.T @ self.cam_to_world[:3, 3]
        return out

    def rays(self) -> np.ndarray:
        """(H, W, 3) un-normalized rays with unit z component."""
        y, x = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        return np.stack([(x - self.cx) / self.fx, (y - self.cy) / self.fy, np.ones(x.shape)], axis=-1)

    def to_world(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.rotation.T + self.cam_to_world[:3, 3]

    def dirs_to_world(self, d: np.ndarray) -> np.ndarray:
        return d @ self.rotation.T

    def to_camera(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.cam_to_world[:3, 3]) @ self.rotation

    def project(self, pts_cam: np.ndarray):
        """Pixel coordinates (x, y) and depth z of camera-frame points."""
        z = pts_cam[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = self.fx * pts_cam[..., 0] / z + self.cx
            y = self.fy * pts_cam[..., 1] / z + self.cy
        return x, y, z

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height,
                "cam_to_world": self.cam_to_world.reshape(-1).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        m = np.asarray(d.get("cam_to_world", np.eye(4).reshape(-1)), dtype=np.float64)
        if m.size != 16:
            raise ValueError("cam_to_world must hold 16 numbers (row-major 4x4)")
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]), m.reshape(4, 4))


def look_at(eye, target, width: int, height: int, fov_x_deg: float = 100.0, world_up=(0.0, 0.0, 1.0)) -> Camera:
    """Pinhole camera at ``eye`` looking at ``target`` with a horizontal FOV."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(world_up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-9:
        raise ValueError("viewing direction is parallel to world_up")
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    m = np.eye(4)
    m[:3, 0] = right
    m[:3, 1] = down
    m[:3, 2] = fwd
    m[:3, 3] = eye
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    f = (width / 2.0) / np.tan(np.radians(fov_x_deg) / 2.0)
    return Camera(f, f, cx, cy, width, height, m)


@dataclass(eq=False)
class GeometryMap:
    """Per-pixel normals, plane offsets and 3D points in the camera frame."""

    normals: np.ndarray
    plane_offsets: np.ndarray
    points: np.ndarray
    valid: np.ndarray

    def residual(self) -> np.ndarray:
        """|n . P + p| per pixel (0 where invalid)."""
        r = np.abs(np.einsum("...i,...i->...", self.normals, self.points) + self.plane_offsets)
        return np.where(self.valid, r, 0.0)


def pn_layer(normals, plane_offsets, camera: Camera, valid=None) -> GeometryMap:
    """Points from normals and plane offsets: ``P = -(p / (v . n)) v``.

    Pixels whose ray grazes the plane (``|v . n| < 1e-4``) are marked invalid
    and their point set to zero.
    """
    n = np.asarray(normals, dtype=np.float64)
    p = np.asarray(plane_offsets, dtype=np.float64)
    rays = camera.rays()
    vn = np.einsum("...i,...i->...", rays, n)
    ok = np.abs(vn) >= GRAZE_EPS
    ok &= np.isfinite(p) & np.all(np.isfinite(n), axis=-1)
    if valid is not None:
        ok &= np.asarray(valid, dtype=bool)
    scale = np.zeros_like(vn)
    np.divide(-p, vn, out=scale, where=ok)
    pts = scale[..., None] * rays
    pts[~ok] = 0.0
    return GeometryMap(n, p, pts, ok)


def depth_to_points(depth, camera: Camera):
    """Unproject a z-depth image; returns ``(points, valid)`` in the camera frame."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (camera.height, camera.width):
        raise ValueError(f"depth shape {depth.shape} does not match camera {camera.height}x{camera.width}")
    valid = (depth > 0) & np.isfinite(depth)
    pts = np.where(valid[..., None], depth[..., None] * camera.rays(), 0.0)
    return pts, valid


def _window_stack(a: np.ndarray, r: int = 1) -> np.ndarray:
    """Stack the (2r+1)^2 neighbours of every interior pixel along a new axis."""
    h, w = a.shape[:2]
    parts = [a[dy:h - 2 * r + dy, dx:w - 2 * r + dx] for dy in range(2 * r + 1) for dx in range(2 * r + 1)]
    return np.stack(parts, axis=2)


def points_to_normals_offsets(points, valid=None):
    """Per-pixel plane fit over 3x3 windows.

    Each pixel considers the nine 3x3 windows that contain it and keeps the
    least-squares plane of the window with the smallest residual (the centered
    window wins ties), so pixels next to a crease take the plane they belong to.
    A window is usable only when all nine of its points are valid. Returns
    ``(normals, offsets, ok)``; normals face the camera and ``p = -n . P``.
    """
    pts = np.asarray(points, dtype=np.float64)
    h, w = pts.shape[:2]
    if valid is None:
        valid = np.all(np.isfinite(pts), axis=-1) & (pts[..., 2] > 0)
    valid = np.asarray(valid, dtype=bool)
    normals = np.zeros((h, w, 3))
    offsets = np.zeros((h, w))
    ok = np.zeros((h, w), dtype=bool)
    if h < 3 or w < 3:
        return normals, offsets, ok

    win = _window_stack(pts)                       # (h-2, w-2, 9, 3)
    win_ok = _window_stack(valid).all(axis=2)      # (h-2, w-2)
    centered = win - win.mean(axis=2, keepdims=True)
    cov = np.einsum("...ki,...kj->...ij", centered, centered)
    cov[~win_ok] = np.eye(3)
    evals, evecs = np.linalg.eigh(cov)
    wn = evecs[..., :, 0]                          # eigenvector of the smallest eigenvalue
    resid = np.where(win_ok, evals[..., 0], np.inf)

    # window centered at (cy, cx) covers pixels cy-1..cy+1; candidate windows for
    # pixel (y, x) are centered at (y+dy, x+dx) for dy, dx in {0, -1, 1}
    best = np.full((h, w), np.inf)
    for dy, dx in [(0, 0)] + [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)]:
        # pixel (y, x) -> window index (y + dy - 1, x + dx - 1)
        ys = slice(max(0, 1 - dy), min(h, h - 1 - dy))
        xs = slice(max(0, 1 - dx), min(w, w - 1 - dx))
        wy = slice(ys.start + dy - 1, ys.stop + dy - 1)
        wx = slice(xs.start + dx - 1, xs.stop + dx - 1)
        cand = resid[wy, wx]
        # small relative margin so exact-plane ties keep the earlier (centered) window
        cur = best[ys, xs]
        with np.errstate(invalid="ignore"):
            better = cand < np.where(np.isfinite(cur), cur - 1e-15 * (1.0 + np.abs(cur)), np.inf)
        better &= valid[ys, xs]
        sub_n = normals[ys, xs]
        sub_n[better] = wn[wy, wx][better]
        normals[ys, xs] = sub_n
        sub_b = best[ys, xs]
        sub_b[better] = cand[better]
        best[ys, xs] = sub_b
    ok = np.isfinite(best) & valid
    normals[~ok] = 0.0
    # orient toward the camera: n . P < 0
    flip = np.einsum("...i,...i->...", normals, pts) > 0
    normals[flip] *= -1.0
    normals /= np.maximum(np.linalg.norm(normals, axis=-1, keepdims=True), 1e-300)
    offsets = np.where(ok, -np.einsum("...i,...i->...", normals, pts), 0.0)
    return normals, offsets, ok


def geometry_from_depth(depth, camera: Camera) -> GeometryMap:
    """Derive normals/offsets from depth and rebuild the points with the PN layer."""
    pts, valid = depth_to_points(depth, camera)
    n, p, ok = points_to_normals_offsets(pts, valid)
    return pn_layer(n, p, camera, ok)
