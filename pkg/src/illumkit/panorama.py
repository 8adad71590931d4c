"""Equirectangular parameterization of the sphere of directions around a locale.

Conventions
-----------
* Pixel ``(u, v)`` has its center at azimuth ``phi = (u + 0.5) * 2pi / W`` and
  polar angle ``theta = (v + 0.5) * pi / H``; ``theta = 0`` is the locale's up axis.
* "Continuous" coordinates returned by :func:`direction_to_pixel` are edge based:
  ``u_c = phi * W / 2pi`` and ``v_c = theta * H / pi``, so pixel ``(u, v)`` covers
  ``[u, u + 1) x [v, v + 1)`` and ``floor`` recovers the index.
* Sampling coordinates (:func:`distortion_grid`, :func:`sample_bilinear`) are
  center based, i.e. the continuous coordinate minus one half, so that integer
  values land on pixel centers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

DEFAULT_HEIGHT = 160
DEFAULT_WIDTH = 320

KINDS = ("hdr", "ldr", "distance", "mask")
SENTINEL = -1.0


def _unit(x, name="vector"):
    x = np.asarray(x, dtype=np.float64)
    n = np.linalg.norm(x)
    if not np.isfinite(n) or n == 0.0:
        raise ValueError(f"{name} must be a finite non-zero 3-vector")
    return x / n


@dataclass(frozen=True, eq=False)
class Locale:
    """A 3D point with an upright axis; the frame of one illumination map.

    ``azimuth_ref`` is orthogonalized against ``up`` on construction. When it is
    omitted, world +x projected onto the plane orthogonal to ``up`` is used
    (world +y if ``up`` is parallel to x).
    """

    position: np.ndarray
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    azimuth_ref: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise ValueError("locale position must be finite")
        up = _unit(np.asarray(self.up, dtype=np.float64).reshape(3), "up")
        ref = self.azimuth_ref
        if ref is None:
            ref = np.array([1.0, 0.0, 0.0])
            if abs(up @ ref) > 1.0 - 1e-6:
                ref = np.array([0.0, 1.0, 0.0])
        ref = np.asarray(ref, dtype=np.float64).reshape(3)
        ref = ref - (ref @ up) * up
        ref = _unit(ref, "azimuth_ref (after removing its up component)")
        # one more Gram-Schmidt pass keeps |ref . up| at round-off level
        ref = _unit(ref - (ref @ up) * up)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "up", up)
        object.__setattr__(self, "azimuth_ref", ref)

    @property
    def side(self) -> np.ndarray:
        """Third frame axis, ``up x azimuth_ref`` (direction of phi = pi/2)."""
        return np.cross(self.up, self.azimuth_ref)

    @property
    def frame(self) -> np.ndarray:
        """3x3 matrix whose rows are (azimuth_ref, side, up)."""
        return np.stack([self.azimuth_ref, self.side, self.up])

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "up": self.up.tolist(),
            "azimuth_ref": self.azimuth_ref.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Locale":
        return cls(np.array(d["position"], dtype=float), np.array(d.get("up", [0, 0, 1]), dtype=float),
                   None if d.get("azimuth_ref") is None else np.array(d["azimuth_ref"], dtype=float))


CANONICAL = Locale(np.zeros(3))


@dataclass(eq=False)
class PanoramaImage:
    """A W x H equirectangular map with W == 2H.

    ``data`` has shape (H, W, C). Unobserved color pixels carry the -1 sentinel
    in every channel; ``kind`` is one of ``hdr``, ``ldr``, ``distance``, ``mask``.
    """

    data: np.ndarray
    kind: str = "hdr"
    locale: Optional[Locale] = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"panorama data must be HxWx1 or HxWx3, got {data.shape}")
        if data.shape[1] != 2 * data.shape[0]:
            raise ValueError(f"panorama must have W == 2H, got {data.shape[1]}x{data.shape[0]}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown panorama kind {self.kind!r}")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def observed(self) -> np.ndarray:
        """Boolean (H, W) map of pixels that do not carry the sentinel."""
        if self.kind == "mask":
            return self.data[:, :, 0] > 0.5
        return ~np.all(self.data == SENTINEL, axis=2)

    def directions(self) -> np.ndarray:
        return direction_grid(self.height, self.width, self.locale)


def _check_dims(height, width):
    if height < 1 or width < 1:
        raise ValueError("panorama dimensions must be positive")


def pixel_to_direction(u, v, height: int, width: int, locale: Optional[Locale] = None) -> np.ndarray:
    """World-frame unit direction through the center of pixel ``(u, v)``.

    ``u`` and ``v`` may be integer arrays of matching shape; the result has
    shape ``(..., 3)``.
    """
    _check_dims(height, width)
    u = np.asarray(u)
    v = np.asarray(v)
    if np.any(u < 0) or np.any(u >= width) or np.any(v < 0) or np.any(v >= height):
        raise IndexError(f"pixel index out of range for a {width}x{height} panorama")
    phi = (u + 0.5) * (2.0 * np.pi / width)
    theta = (v + 0.5) * (np.pi / height)
    local = spherical_to_local(phi, theta)
    return local_to_world(local, locale)


def spherical_to_local(phi, theta) -> np.ndarray:
    st = np.sin(theta)
    d = np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta) * np.ones_like(phi)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def local_to_world(d: np.ndarray, locale: Optional[Locale] = None) -> np.ndarray:
    if locale is None:
        return d
    return d @ locale.frame


def world_to_local(d: np.ndarray, locale: Optional[Locale] = None) -> np.ndarray:
    if locale is None:
        return d
    return d @ locale.frame.T


def direction_to_spherical(d, locale: Optional[Locale] = None):
    """Return ``(phi, theta)`` with phi in [0, 2pi) and theta in [0, pi]."""
    d = np.asarray(d, dtype=np.float64)
    norm = np.linalg.norm(d, axis=-1)
    if np.any(norm == 0.0) or not np.all(np.isfinite(norm)):
        raise ValueError("direction must be a finite non-zero vector")
    local = world_to_local(d / norm[..., None], locale)
    phi = np.mod(np.arctan2(local[..., 1], local[..., 0]), 2.0 * np.pi)
    # mod can return exactly 2pi for tiny negative inputs
    phi = np.where(phi >= 2.0 * np.pi, 0.0, phi)
    theta = np.arccos(np.clip(local[..., 2], -1.0, 1.0))
    return phi, theta


def direction_to_pixel(d, height: int, width: int, locale: Optional[Locale] = None):
    """Edge-based continuous ``(u, v)`` of direction ``d``; u wraps periodically."""
    _check_dims(height, width)
    phi, theta = direction_to_spherical(d, locale)
    u = phi * (width / (2.0 * np.pi))
    v = theta * (height / np.pi)
    return u, v


def direction_to_index(d, height: int, width: int, locale: Optional[Locale] = None):
    """Integer pixel containing direction ``d``."""
    u, v = direction_to_pixel(d, height, width, locale)
    ui = np.floor(u).astype(np.int64) % width
    vi = np.clip(np.floor(v).astype(np.int64), 0, height - 1)
    return ui, vi


def direction_grid(height: int, width: int, locale: Optional[Locale] = None) -> np.ndarray:
    """(H, W, 3) array of pixel-center directions."""
    v, u = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return pixel_to_direction(u, v, height, width, locale)


def solid_angle(v, height: int, width: int):
    """Steradians covered by any pixel of row ``v``."""
    v = np.asarray(v)
    if np.any(v < 0) or np.any(v >= height):
        raise IndexError(f"row index out of range for height {height}")
    theta = (v + 0.5) * (np.pi / height)
    return (2.0 * np.pi / width) * (np.pi / height) * np.sin(theta)


def solid_angle_map(height: int, width: int) -> np.ndarray:
    """(H, W) per-pixel solid angles."""
    rows = solid_angle(np.arange(height), height, width)
    return np.repeat(rows[:, None], width, axis=1)


def distortion_grid(height: int, width: int, k: int = 1) -> np.ndarray:
    """Distortion-aware sampling locations for a (2k+1)^2 kernel.

    For every pixel, the kernel taps are laid out on the tangent plane at the
    pixel's direction with angular spacing ``pi / H`` and mapped back onto the
    panorama. Returns an array of shape (H, W, 2k+1, 2k+1, 2) holding the
    center-based ``(u, v)`` of each tap, indexed ``[v, u, j + k, i + k]`` with
    ``i`` the horizontal and ``j`` the vertical offset. Column coordinates are
    wrapped into ``[-0.5, W - 0.5)``.
    """
    if k < 1:
        raise ValueError("kernel half-width must be >= 1")
    if height < 2 * k + 1:
        raise ValueError("panorama too small for the requested kernel")
    delta = np.pi / height
    v, u = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    phi = (u + 0.5) * (2.0 * np.pi / width)
    theta = (v + 0.5) * delta
    d = spherical_to_local(phi, theta)
    e_phi = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)
    e_theta = np.stack([np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), -np.sin(theta)], axis=-1)

    offs = np.arange(-k, k + 1)
    t = np.tan(offs * delta)
    # taps[v, u, j, i, :]
    taps = (d[:, :, None, None, :]
            + t[None, None, None, :, None] * e_phi[:, :, None, None, :]
            + t[None, None, :, None, None] * e_theta[:, :, None, None, :])
    uc, vc = direction_to_pixel(taps, height, width)
    uc = uc - 0.5
    vc = vc - 0.5
    uc = np.where(uc >= width - 0.5, uc - width, uc)
    out = np.stack([uc, vc], axis=-1)
    # the center tap is the pixel itself, exactly
    out[:, :, k, k, 0] = u
    out[:, :, k, k, 1] = v
    return out


def sample_bilinear(img: np.ndarray, uc, vc) -> np.ndarray:
    """Bilinear lookup at center-based coordinates; columns wrap, rows clamp."""
    h, w = img.shape[:2]
    uc = np.asarray(uc, dtype=np.float64)
    vc = np.clip(np.asarray(vc, dtype=np.float64), 0.0, h - 1.0)
    u0 = np.floor(uc)
    v0 = np.floor(vc)
    fu = uc - u0
    fv = vc - v0
    u0 = u0.astype(np.int64)
    v0 = v0.astype(np.int64)
    u1 = (u0 + 1) % w
    u0 = u0 % w
    v1 = np.minimum(v0 + 1, h - 1)
    if img.ndim == 3:
        fu = fu[..., None]
        fv = fv[..., None]
    top = img[v0, u0] * (1.0 - fu) + img[v0, u1] * fu
    bot = img[v1, u0] * (1.0 - fu) + img[v1, u1] * fu
    return top * (1.0 - fv) + bot * fv


def sample_direction(img: np.ndarray, d, locale: Optional[Locale] = None) -> np.ndarray:
    """Bilinear panorama lookup along world directions ``d``."""
    h, w = img.shape[:2]
    u, v = direction_to_pixel(d, h, w, locale)
    return sample_bilinear(img, u - 0.5, v - 0.5)


def roll_columns(img: np.ndarray, shift: int) -> np.ndarray:
    """Rotate a panorama about its up axis by ``shift`` columns."""
    return np.roll(img, int(shift), axis=1)


def _pyramid_guess(values: np.ndarray, known: np.ndarray) -> np.ndarray:
    """Coarse-to-fine masked averages used to seed the hole diffusion."""
    h, w = known.shape
    if known.all():
        return values.copy()
    if not known.any():
        return np.zeros_like(values)
    if h < 2 or w < 2 or h % 2 or w % 2:
        mean = values[known].mean(axis=0)
        out = values.copy()
        out[~known] = mean
        return out
    wts = known.astype(np.float64)
    vals = values * wts[..., None]
    csum = vals.reshape(h // 2, 2, w // 2, 2, -1).sum(axis=(1, 3))
    cw = wts.reshape(h // 2, 2, w // 2, 2).sum(axis=(1, 3))
    cknown = cw > 0
    coarse = np.where(cknown[..., None], csum / np.maximum(cw, 1.0)[..., None], 0.0)
    coarse = _pyramid_guess(coarse, cknown)
    up = np.repeat(np.repeat(coarse, 2, axis=0), 2, axis=1)
    return np.where(known[..., None], values, up)


def fill_holes(values: np.ndarray, known: np.ndarray, tol: float = 1e-4, max_iter: int = 500) -> np.ndarray:
    """Masked diffusion: fill unknown pixels by iterated 4-neighbour averaging.

    Known pixels are held fixed. Columns wrap around; rows are clamped at the
    poles. Holes are seeded from a masked average pyramid and then relaxed with
    Jacobi sweeps until the largest update is below ``tol`` or ``max_iter``
    sweeps have run. ``values`` is (H, W) or (H, W, C).
    """
    squeeze = values.ndim == 2
    x = np.asarray(values, dtype=np.float64)
    if squeeze:
        x = x[:, :, None]
    known = np.asarray(known, dtype=bool)
    if known.all():
        return x[:, :, 0].copy() if squeeze else x.copy()
    x = _pyramid_guess(np.where(known[..., None], x, 0.0), known)
    if known.any():
        hole = ~known
        for _ in range(max_iter):
            up = np.concatenate([x[:1], x[:-1]], axis=0)
            down = np.concatenate([x[1:], x[-1:]], axis=0)
            avg = 0.25 * (up + down + np.roll(x, 1, axis=1) + np.roll(x, -1, axis=1))
            delta = np.abs(avg[hole] - x[hole]).max()
            x[hole] = avg[hole]
            if delta < tol:
                break
    return x[:, :, 0] if squeeze else x
