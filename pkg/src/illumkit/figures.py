"""Matplotlib figures written next to the JSON reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .hdr import auto_exposure, gamma_view  # noqa: E402
from .shading import DEFAULT_WORK_DIMS, diffuse_convolve, relight_sphere  # noqa: E402

FIG_DPI = 120


def _show(ax, img, title):
    ax.imshow(img, interpolation="nearest")
    ax.set_title(title, fontsize=9)
    ax.set_xticks([])
    ax.set_yticks([])


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp.png")
    fig.savefig(tmp, dpi=FIG_DPI, bbox_inches="tight")
    plt.close(fig)
    tmp.replace(path)
    return path


def eval_figure(pred, gt, report, path, work_dims=DEFAULT_WORK_DIMS):
    """Ground truth vs prediction: maps, diffuse convolutions, spheres and error maps."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if report.rotation_offset:
        pred = np.roll(pred, -report.rotation_offset, axis=1)
    exposure = auto_exposure(gt)
    dp = diffuse_convolve(pred, work_dims)
    dg = diffuse_convolve(gt, work_dims)
    err = np.sqrt(((np.log1p(np.maximum(pred, 0)) - np.log1p(np.maximum(gt, 0))) ** 2).sum(axis=-1))

    fig, axes = plt.subplots(3, 3, figsize=(11, 7.5))
    _show(axes[0, 0], gamma_view(gt, exposure=exposure), "ground truth")
    _show(axes[0, 1], gamma_view(pred, exposure=exposure), "prediction")
    im = axes[0, 2].imshow(err, cmap="magma")
    axes[0, 2].set_title("per-pixel l2 (log)", fontsize=9)
    axes[0, 2].set_xticks([])
    axes[0, 2].set_yticks([])
    fig.colorbar(im, ax=axes[0, 2], fraction=0.025)

    dexp = auto_exposure(dg)
    _show(axes[1, 0], gamma_view(dg, exposure=dexp), "diffuse(gt)")
    _show(axes[1, 1], gamma_view(dp, exposure=dexp), "diffuse(pred)")
    im = axes[1, 2].imshow(np.sqrt(((dp - dg) ** 2).sum(axis=-1)), cmap="magma")
    axes[1, 2].set_title("diffuse error", fontsize=9)
    axes[1, 2].set_xticks([])
    axes[1, 2].set_yticks([])
    fig.colorbar(im, ax=axes[1, 2], fraction=0.025)

    for j, (img, name) in enumerate(((gt, "gt"), (pred, "pred"))):
        _show(axes[2, j], relight_sphere(img, "mirror", 128, exposure=exposure), f"mirror sphere, {name}")
    axes[2, 2].axis("off")
    axes[2, 2].text(0.0, 0.5, "l2 (log)  {:.4g}\nl2        {:.4g}\ndiffuse   {:.4g}\noffset    {}".format(
        report.l2_log, report.l2, report.diffuse, report.rotation_offset), family="monospace", fontsize=10,
        va="center")
    return _save(fig, path)


def panorama_figure(img, path, title="", exposure="auto"):
    """Single tone-mapped panorama with phi/theta axes."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    fig, ax = plt.subplots(figsize=(8, 4.4))
    shown = img if img.ndim == 2 else gamma_view(np.maximum(img, 0), exposure=exposure)
    ax.imshow(shown, extent=(0, 360, 180, 0), cmap="viridis" if img.ndim == 2 else None)
    ax.set_xlabel("azimuth (deg)")
    ax.set_ylabel("polar angle (deg)")
    if title:
        ax.set_title(title)
    return _save(fig, path)
