"""Losses, evaluation metrics and a finite-difference gradient checker.

Every loss comes with an analytic gradient with respect to its first argument
(``*_grad``) so the differentiability contract can be verified numerically.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import panorama as pano
from .hdr import log_scale
from .shading import DEFAULT_WORK_DIMS, diffuse_convolve, diffuse_convolve_adjoint

LAMBDA_L2 = 0.1
LAMBDA_DIFFUSE = 0.05


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def _wsum(values: np.ndarray) -> float:
    # math.fsum is exactly rounded, hence order independent and reproducible
    return math.fsum(values.ravel().tolist())


# -- illumination losses ---------------------------------------------------

def loss_l2_log(H_pred, H_gt, signed_mean: bool = False) -> float:
    """Mean squared difference of ln(1 + H).

    ``signed_mean=True`` returns the plain signed mean difference instead.
    """
    a, b = _same_shape(H_pred, H_gt)
    d = log_scale(a) - log_scale(b)
    if signed_mean:
        return _wsum(d) / d.size
    return _wsum(d * d) / d.size


def loss_l2_log_grad(H_pred, H_gt) -> np.ndarray:
    a, b = _same_shape(H_pred, H_gt)
    d = log_scale(a) - log_scale(b)
    return 2.0 * d / (1.0 + a) / d.size


def loss_diffuse(H_pred, H_gt, work_dims=DEFAULT_WORK_DIMS, signed_mean: bool = False) -> float:
    """Mean squared difference of the diffuse-convolved maps at ``work_dims``."""
    a, b = _same_shape(H_pred, H_gt)
    d = diffuse_convolve(a, work_dims) - diffuse_convolve(b, work_dims)
    if signed_mean:
        return _wsum(d) / d.size
    return _wsum(d * d) / d.size


def loss_diffuse_grad(H_pred, H_gt, work_dims=DEFAULT_WORK_DIMS) -> np.ndarray:
    a, b = _same_shape(H_pred, H_gt)
    d = diffuse_convolve(a, work_dims) - diffuse_convolve(b, work_dims)
    return diffuse_convolve_adjoint(2.0 * d / d.size, a.shape[:2]).reshape(a.shape)


def loss_total(H_pred, H_gt, work_dims=DEFAULT_WORK_DIMS) -> float:
    return combine_losses(loss_l2_log(H_pred, H_gt), loss_diffuse(H_pred, H_gt, work_dims))


def combine_losses(l2_log: float, diffuse: float) -> float:
    return LAMBDA_L2 * l2_log + LAMBDA_DIFFUSE * diffuse


# -- geometry losses -------------------------------------------------------

def _valid(mask, shape):
    if mask is None:
        return np.ones(shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        raise ValueError(f"mask shape {mask.shape} does not match {shape}")
    return mask


def loss_normals_cosine(n_pred, n_gt, mask=None) -> float:
    """mean(1 - n_pred . n_gt) over valid pixels."""
    a, b = _same_shape(n_pred, n_gt)
    m = _valid(mask, a.shape[:-1])
    if not m.any():
        raise ValueError("no valid pixels")
    dots = np.einsum("...i,...i->...", a, b)[m]
    return _wsum(1.0 - dots) / dots.size


def loss_normals_cosine_grad(n_pred, n_gt, mask=None) -> np.ndarray:
    a, b = _same_shape(n_pred, n_gt)
    m = _valid(mask, a.shape[:-1])
    return np.where(m[..., None], -b, 0.0) / m.sum()


def loss_offsets_l1(p_pred, p_gt, mask=None) -> float:
    a, b = _same_shape(p_pred, p_gt)
    m = _valid(mask, a.shape)
    if not m.any():
        raise ValueError("no valid pixels")
    return _wsum(np.abs(a - b)[m]) / m.sum()


def loss_offsets_l1_grad(p_pred, p_gt, mask=None) -> np.ndarray:
    a, b = _same_shape(p_pred, p_gt)
    m = _valid(mask, a.shape)
    return np.where(m, np.sign(a - b), 0.0) / m.sum()


def loss_points_l1(P_pred, P_gt, mask=None) -> float:
    """Mean over valid pixels of the per-pixel l1 distance between 3D points."""
    a, b = _same_shape(P_pred, P_gt)
    m = _valid(mask, a.shape[:-1])
    if not m.any():
        raise ValueError("no valid pixels")
    return _wsum(np.abs(a - b).sum(axis=-1)[m]) / m.sum()


def loss_points_l1_grad(P_pred, P_gt, mask=None) -> np.ndarray:
    a, b = _same_shape(P_pred, P_gt)
    m = _valid(mask, a.shape[:-1])
    return np.where(m[..., None], np.sign(a - b), 0.0) / m.sum()


# -- evaluation ------------------------------------------------------------

@dataclass
class EvalReport:
    l2_log: float
    l2: float
    diffuse: float
    pixels: int
    diffuse_pixels: int
    rotation_offset: int = 0
    aligned: bool = False
    meta: dict = field(default_factory=lambda: {
        "aggregation": "solid-angle weighted mean of per-pixel Euclidean RGB distance",
        "log": "ln(1 + H)",
        "note": "means, not image sums, so values do not depend on the panorama resolution",
    })

    def to_dict(self) -> dict:
        return asdict(self)


def weighted_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Solid-angle weighted mean of the per-pixel Euclidean distance."""
    h, w = a.shape[:2]
    dist = np.sqrt(((a - b) ** 2).reshape(h, w, -1).sum(axis=-1))
    s = pano.solid_angle_map(h, w)
    return _wsum(dist * s) / _wsum(s)


def best_rotation(pred: np.ndarray, gt: np.ndarray) -> int:
    """Column shift ``k`` minimizing l2 between ``roll(pred, -k)`` and ``gt``."""
    h, w = pred.shape[:2]
    s = pano.solid_angle_map(h, w)
    errs = [np.sum(s * np.sqrt(((np.roll(pred, -k, axis=1) - gt) ** 2).reshape(h, w, -1).sum(axis=-1)))
            for k in range(w)]
    return int(np.argmin(errs))


def eval_illum(pred, gt, align: bool = False, work_dims=DEFAULT_WORK_DIMS) -> EvalReport:
    """l2 (log), l2 and diffuse-convolution errors between two radiance maps."""
    pred = np.asarray(getattr(pred, "data", pred), dtype=np.float64)
    gt = np.asarray(getattr(gt, "data", gt), dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"dimension mismatch: pred {pred.shape} vs gt {gt.shape}")
    if pred.ndim == 2:
        pred, gt = pred[:, :, None], gt[:, :, None]
    offset = 0
    if align:
        offset = best_rotation(pred, gt)
        pred = np.roll(pred, -offset, axis=1)
    h, w = pred.shape[:2]
    if work_dims is None or work_dims[0] > h or h % work_dims[0] or w % work_dims[1]:
        work_dims = (h, w)
    dp = diffuse_convolve(pred, work_dims)
    dg = diffuse_convolve(gt, work_dims)
    return EvalReport(
        l2_log=weighted_distance(log_scale(np.maximum(pred, 0.0)), log_scale(np.maximum(gt, 0.0))),
        l2=weighted_distance(pred, gt),
        diffuse=weighted_distance(dp, dg),
        pixels=h * w,
        diffuse_pixels=int(work_dims[0] * work_dims[1]),
        rotation_offset=offset,
        aligned=bool(align),
    )


# -- gradient checking -----------------------------------------------------

def finite_difference(f: Callable, x: np.ndarray, idx: np.ndarray, h: float) -> np.ndarray:
    """Central differences of scalar ``f`` at the flat indices ``idx`` of ``x``."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    g = np.empty(len(idx))
    for n, i in enumerate(idx):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        g[n] = (fp - fm) / (2.0 * h)
    return g


def grad_check(f: Callable, grad: Callable, x, h: float = 1e-5, n_samples: int = 256,
               seed: Optional[int] = 0) -> float:
    """Max of |g_analytic - g_fd| / max(1, |g_fd|) over a random subsample of entries.

    ``grad(x)`` must return the analytic gradient with the shape of ``x``. At
    least ``n_samples`` entries (or all, if fewer) are checked.
    """
    if not (1e-7 <= h <= 1e-3):
        raise ValueError("step h must lie in [1e-7, 1e-3]")
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(grad(x), dtype=np.float64)
    if g.shape != x.shape:
        raise ValueError(f"gradient shape {g.shape} != input shape {x.shape}")
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("analytic gradient is not finite")
    rng = np.random.default_rng(seed)
    n = min(max(n_samples, 256), x.size)
    idx = rng.choice(x.size, size=n, replace=False)
    fd = finite_difference(f, x, idx, h)
    if not np.all(np.isfinite(fd)):
        raise FloatingPointError("finite-difference gradient is not finite")
    return float(np.max(np.abs(g.reshape(-1)[idx] - fd) / np.maximum(1.0, np.abs(fd))))


def warp_jacobian_check(n_points: int = 1000, h: float = 1e-5, seed: Optional[int] = 0) -> float:
    """Max relative error of the analytic warp Jacobian against central differences."""
    from .panorama import Locale
    from .warp import spherical_coords, warp_jacobian

    rng = np.random.default_rng(seed)
    loc = Locale(rng.normal(size=3), rng.normal(size=3))
    worst = 0.0
    done = 0
    while done < n_points:
        X = loc.position + rng.uniform(-3.0, 3.0, size=3)
        q = X - loc.position
        r = np.linalg.norm(q)
        # keep away from the poles and from the azimuth branch cut
        if r < 0.2 or abs(q @ loc.up) / r > 0.95:
            continue
        phi, _ = spherical_coords(X, loc)
        if min(phi, 2 * np.pi - phi) < 1e-3:
            continue
        J = warp_jacobian(X, loc)
        fd = np.empty((2, 3))
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            pp, tp = spherical_coords(X + e, loc)
            pm, tm = spherical_coords(X - e, loc)
            dphi = (pp - pm + np.pi) % (2 * np.pi) - np.pi
            fd[:, i] = [dphi / (2 * h), (tp - tm) / (2 * h)]
        worst = max(worst, float(np.max(np.abs(J - fd) / np.maximum(1.0, np.abs(fd)))))
        done += 1
    return worst


def gradcheck_suite(seed: int = 0, h: float = 1e-5, size=(20, 40), work_dims=(10, 20)) -> dict:
    """Gradient checks of every differentiable operator; returns name -> max relative error."""
    rng = np.random.default_rng(seed)
    H_gt = rng.uniform(0.0, 2.0, size=(*size, 3))
    H_pred = rng.uniform(0.0, 2.0, size=(*size, 3))
    n_gt = rng.normal(size=(*size, 3))
    n_gt /= np.linalg.norm(n_gt, axis=-1, keepdims=True)
    n_pred = rng.normal(size=(*size, 3))
    n_pred /= np.linalg.norm(n_pred, axis=-1, keepdims=True)
    return {
        "loss_l2_log": grad_check(lambda x: loss_l2_log(x, H_gt), lambda x: loss_l2_log_grad(x, H_gt),
                                  H_pred, h, seed=seed),
        "loss_diffuse": grad_check(lambda x: loss_diffuse(x, H_gt, work_dims),
                                   lambda x: loss_diffuse_grad(x, H_gt, work_dims), H_pred, h, seed=seed),
        "loss_normals_cosine": grad_check(lambda x: loss_normals_cosine(x, n_gt),
                                          lambda x: loss_normals_cosine_grad(x, n_gt), n_pred, h, seed=seed),
        "warp_jacobian": warp_jacobian_check(1000, h, seed),
    }
