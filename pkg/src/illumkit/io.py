"""File formats: PFM panoramas with JSON sidecars, 16-bit PNG LDR, scene manifests."""

from __future__ import annotations

import json
import os
import re
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .geometry import Camera
from .ibr import LabeledPointSet, View
from .panorama import Locale, PanoramaImage


class FormatError(ValueError):
    """Malformed input file; ``offset`` is the byte position where parsing failed."""

    def __init__(self, path, offset: int, msg: str):
        super().__init__(f"{path}: byte {offset}: {msg}")
        self.path = str(path)
        self.offset = offset


# -- atomic writes -----------------------------------------------------------

@contextmanager
def atomic_open(path, mode="wb"):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, mode) as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    with atomic_open(path, "w") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def read_json(path):
    path = Path(path)
    text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(path, len(text[:e.pos].encode()), e.msg) from None


# -- PFM -----------------------------------------------------------------------

_HEADER_TOKEN = re.compile(rb"\S+")


def encode_pfm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim == 2:
        tag = b"Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError(f"PFM holds 1 or 3 channels, got shape {img.shape}")
    data = img.astype("<f4")
    if np.isnan(data).any():
        raise ValueError("NaN values cannot be written to PFM")
    h, w = data.shape[:2]
    header = tag + b"\n" + f"{w} {h}\n-1.0\n".encode()
    return header + np.ascontiguousarray(data[::-1]).tobytes()


def decode_pfm(buf: bytes, path="<bytes>") -> np.ndarray:
    """Parse a PFM byte string into an (H, W) or (H, W, 3) float32 array (top row first)."""
    pos = 0
    tokens = []
    while len(tokens) < 4:
        m = _HEADER_TOKEN.search(buf, pos)
        if m is None:
            raise FormatError(path, len(buf), "truncated header")
        tokens.append((m.group(), m.start()))
        pos = m.end()
    # exactly one whitespace byte separates the header from the raster
    pos += 1
    (tag, off_tag), (ws, off_w), (hs, off_h), (ss, off_s) = tokens
    if tag not in (b"PF", b"Pf"):
        raise FormatError(path, off_tag, f"bad magic {tag!r}, expected PF or Pf")
    try:
        w = int(ws)
    except ValueError:
        raise FormatError(path, off_w, f"bad width {ws!r}") from None
    try:
        h = int(hs)
    except ValueError:
        raise FormatError(path, off_h, f"bad height {hs!r}") from None
    if w <= 0 or h <= 0:
        raise FormatError(path, off_w, "non-positive dimensions")
    try:
        scale = float(ss)
    except ValueError:
        raise FormatError(path, off_s, f"bad scale {ss!r}") from None
    if scale == 0:
        raise FormatError(path, off_s, "scale must be non-zero")
    c = 3 if tag == b"PF" else 1
    need = w * h * c * 4
    if len(buf) - pos < need:
        raise FormatError(path, len(buf), f"raster truncated: need {need} bytes after offset {pos}")
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(buf, dtype=dtype, count=w * h * c, offset=pos).astype(np.float32)
    if np.isnan(data).any():
        bad = int(np.flatnonzero(np.isnan(data))[0])
        raise FormatError(path, pos + 4 * bad, "NaN in raster")
    data = data.reshape(h, w, c)[::-1]
    return np.ascontiguousarray(data[:, :, 0] if c == 1 else data)


def write_pfm(path, img: np.ndarray):
    payload = encode_pfm(img)
    with atomic_open(path, "wb") as f:
        f.write(payload)


def read_pfm(path) -> np.ndarray:
    return decode_pfm(Path(path).read_bytes(), path)


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def write_panorama(path, pano: PanoramaImage, extra: Optional[dict] = None):
    """PFM raster plus ``<path>.json`` holding kind, locale and resolution."""
    data = pano.data[:, :, 0] if pano.channels == 1 else pano.data
    write_pfm(path, data)
    meta = {"kind": pano.kind,
            "locale": None if pano.locale is None else pano.locale.to_dict(),
            "resolution": [pano.height, pano.width]}
    if extra:
        meta.update(extra)
    write_json(sidecar_path(path), meta)


def read_panorama(path, kind: Optional[str] = None) -> PanoramaImage:
    data = read_pfm(path).astype(np.float64)
    meta = read_sidecar(path)
    k = kind or meta.get("kind") or ("distance" if data.ndim == 2 else "hdr")
    loc = meta.get("locale")
    return PanoramaImage(data, k, Locale.from_dict(loc) if loc else None)


def read_sidecar(path) -> dict:
    sc = sidecar_path(path)
    return read_json(sc) if sc.exists() else {}


# -- PNG -------------------------------------------------------------------------

def write_png16(path, J: np.ndarray):
    """LDR values in [0, 1] as a 16-bit PNG (65535 <-> 1.0)."""
    import cv2

    J = np.clip(np.asarray(J, dtype=np.float64), 0.0, 1.0)
    q = np.round(J * 65535.0).astype(np.uint16)
    if q.ndim == 3:
        q = q[:, :, ::-1]
    ok, buf = cv2.imencode(".png", q)
    if not ok:
        raise OSError(f"PNG encoding failed for {path}")
    with atomic_open(path, "wb") as f:
        f.write(buf.tobytes())


def read_png(path) -> np.ndarray:
    """8- or 16-bit PNG as float values in [0, 1], RGB order."""
    import cv2

    raw = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    img = cv2.imdecode(raw, cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FormatError(path, 0, "not a decodable PNG")
    scale = 65535.0 if img.dtype == np.uint16 else 255.0
    img = img.astype(np.float64) / scale
    if img.ndim == 3:
        img = img[:, :, 2::-1] if img.shape[2] >= 3 else img
    return img


def write_rgba_png(path, rgba: np.ndarray):
    import cv2

    q = np.round(np.clip(rgba, 0.0, 1.0) * 255.0).astype(np.uint8)
    q = q[:, :, [2, 1, 0, 3]]
    ok, buf = cv2.imencode(".png", q)
    if not ok:
        raise OSError(f"PNG encoding failed for {path}")
    with atomic_open(path, "wb") as f:
        f.write(buf.tobytes())


def read_image(path) -> np.ndarray:
    """PFM or PNG by extension."""
    if str(path).lower().endswith(".pfm"):
        return read_pfm(path).astype(np.float64)
    return read_png(path)


# -- scene manifest --------------------------------------------------------------

@dataclass
class ImageEntry:
    hdr: Path
    ldr: Optional[Path]
    depth: Path
    camera: Camera


@dataclass
class SceneManifest:
    scene_id: str
    images: List[ImageEntry]
    points: Optional[Path] = None
    root: Path = field(default_factory=Path)

    def load_view(self, k: int) -> View:
        e = self.images[k]
        hdr = read_image(e.hdr)
        depth = read_image(e.depth)
        if depth.ndim == 3:
            depth = depth[:, :, 0]
        ldr = read_image(e.ldr) if e.ldr is not None else None
        return View(hdr, depth, e.camera, ldr=ldr, name=str(e.hdr.name))

    def load_views(self) -> List[View]:
        return [self.load_view(k) for k in range(len(self.images))]

    def load_points(self) -> LabeledPointSet:
        if self.points is None:
            raise ValueError(f"scene {self.scene_id!r} has no labeled point set")
        return read_points(self.points)


def _resolve(root: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else root / p


def read_manifest(path) -> SceneManifest:
    path = Path(path)
    d = read_json(path)
    root = path.parent
    images = []
    for i, e in enumerate(d.get("images", [])):
        try:
            cam = Camera.from_dict(e["camera"])
            entry = ImageEntry(_resolve(root, e["hdr"]),
                               _resolve(root, e["ldr"]) if e.get("ldr") else None,
                               _resolve(root, e["depth"]), cam)
        except (KeyError, TypeError) as err:
            raise ValueError(f"{path}: image {i}: missing or malformed field {err}") from None
        for p in (entry.hdr, entry.depth, entry.ldr):
            if p is not None and not p.exists():
                raise FileNotFoundError(f"{path}: image {i}: {p} does not exist")
        images.append(entry)
    pts = _resolve(root, d["points"]) if d.get("points") else None
    return SceneManifest(str(d.get("scene_id", path.stem)), images, pts, root)


def write_manifest(path, manifest: SceneManifest):
    root = Path(path).parent

    def rel(p):
        return os.path.relpath(p, root) if p is not None else None

    d = {"scene_id": manifest.scene_id,
         "images": [{"hdr": rel(e.hdr), "ldr": rel(e.ldr), "depth": rel(e.depth),
                     "camera": e.camera.to_dict()} for e in manifest.images]}
    if manifest.points is not None:
        d["points"] = rel(manifest.points)
    write_json(path, d)


def write_points(path, pts: LabeledPointSet):
    write_json(path, {"points": pts.points.tolist(), "normals": pts.normals.tolist(),
                      "labels": list(pts.labels)})


def read_points(path) -> LabeledPointSet:
    d = read_json(path)
    return LabeledPointSet(np.array(d["points"], dtype=float), np.array(d["normals"], dtype=float), d["labels"])


def write_locales(path, scene_id: str, locales) -> None:
    write_json(path, {"scene_id": scene_id, "locales": [l.to_dict() for l in locales]})


def read_locales(path) -> List[Locale]:
    d = read_json(path)
    return [Locale.from_dict(x) for x in d["locales"]]
