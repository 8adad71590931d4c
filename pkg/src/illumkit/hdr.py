"""LDR/HDR intensity model.

Normalized values ``J`` in [0, 1] correspond to 16-bit raw counts ``J * 65536``.
Radiance is linear below the knee at 3000 counts and exponential above it::

    H = raw * 8e-8                           raw <= 3000
    H = 2.4e-4 * 1.0002 ** (raw - 3000)      raw >  3000

Both branches give 2.4e-4 at the knee.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class HdrRangeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class HdrCurveParams:
    knee_raw: float = 3000.0
    lin_scale: float = 8e-8
    exp_base: float = 1.0002
    exp_scale: float = 2.4e-4
    full_scale: float = 65536.0

    @property
    def log_base(self) -> float:
        return float(np.log1p(self.exp_base - 1.0))

    @property
    def h_max(self) -> float:
        return float(j_to_h(1.0, self))


DEFAULT_CURVE = HdrCurveParams()


def j_to_h(J, params: HdrCurveParams = DEFAULT_CURVE, return_clamped: bool = False):
    """Radiance of normalized LDR values. Inputs outside [0, 1] are clamped (with a warning)."""
    J = np.asarray(J, dtype=np.float64)
    clamped = (J < 0.0) | (J > 1.0)
    if np.any(clamped):
        warnings.warn("J values outside [0, 1] were clamped", HdrRangeWarning, stacklevel=2)
        J = np.clip(J, 0.0, 1.0)
    raw = J * params.full_scale
    lin = raw * params.lin_scale
    ex = params.exp_scale * np.exp((raw - params.knee_raw) * params.log_base)
    H = np.where(raw <= params.knee_raw, lin, ex)
    if H.ndim == 0:
        H = float(H)
    return (H, clamped) if return_clamped else H


def h_to_j(H, params: HdrCurveParams = DEFAULT_CURVE, return_saturated: bool = False):
    """Exact inverse of :func:`j_to_h`; radiance above the curve's range maps to 1.0."""
    H = np.asarray(H, dtype=np.float64)
    if np.any(H < 0) or not np.all(np.isfinite(H)):
        raise ValueError("radiance must be finite and non-negative")
    knee_h = params.knee_raw * params.lin_scale
    with np.errstate(divide="ignore"):
        raw_exp = params.knee_raw + np.log(np.maximum(H, 1e-300) / params.exp_scale) / params.log_base
    raw = np.where(H <= knee_h, H / params.lin_scale, raw_exp)
    J = raw / params.full_scale
    saturated = J > 1.0
    if np.any(saturated):
        warnings.warn("radiance above the curve's range saturated to J = 1", HdrRangeWarning, stacklevel=2)
        J = np.minimum(J, 1.0)
    if J.ndim == 0:
        J = float(J)
    return (J, saturated) if return_saturated else J


def log_scale(H):
    """ln(1 + H), elementwise."""
    return np.log1p(np.asarray(H, dtype=np.float64))


def auto_exposure(H, percentile: float = 99.0) -> float:
    """Exposure that maps the given percentile of H to 1."""
    H = np.asarray(H, dtype=np.float64)
    H = H[H >= 0]
    if H.size == 0:
        return 1.0
    ref = np.percentile(H, percentile)
    return 1.0 / ref if ref > 0 else 1.0


def gamma_view(H, gamma: float = 3.3, exposure="auto"):
    """Display mapping clamp(exposure * H, 0, 1) ** (1 / gamma)."""
    H = np.asarray(H, dtype=np.float64)
    if isinstance(exposure, str):
        if exposure != "auto":
            raise ValueError("exposure must be a number or 'auto'")
        exposure = auto_exposure(H)
    return np.clip(exposure * H, 0.0, 1.0) ** (1.0 / gamma)
