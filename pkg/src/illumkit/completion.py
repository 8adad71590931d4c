"""Non-learned completion of partially observed panoramas."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .panorama import SENTINEL, fill_holes


@dataclass
class NNMatch:
    completed: np.ndarray
    entry_id: str
    shift: int
    score: float


class PanoLibrary:
    """Complete LDR panoramas sharing one resolution, searched by :func:`complete_nn`."""

    def __init__(self, entries: Sequence[Tuple[str, np.ndarray]] = ()):
        self.entries: List[Tuple[str, np.ndarray]] = []
        for entry_id, img in entries:
            self.add(entry_id, img)

    def add(self, entry_id: str, img: np.ndarray):
        img = np.asarray(img, dtype=np.float64)
        if img.ndim == 2:
            img = img[:, :, None]
        if self.entries and img.shape != self.entries[0][1].shape:
            raise ValueError(f"library entry {entry_id!r} has shape {img.shape}, expected {self.entries[0][1].shape}")
        if np.any(img < 0) or np.any(img > 1):
            raise ValueError(f"library entry {entry_id!r} has values outside [0, 1]")
        self.entries.append((str(entry_id), img))

    def __len__(self):
        return len(self.entries)


def _as_partial(color, observed):
    color = np.asarray(color, dtype=np.float64)
    if color.ndim == 2:
        color = color[:, :, None]
    if observed is None:
        observed = ~np.all(color == SENTINEL, axis=2)
    return color, np.asarray(observed, dtype=bool)


def rotation_scores(color: np.ndarray, observed: np.ndarray, entry: np.ndarray) -> np.ndarray:
    """Mean squared color distance over observed pixels for every column shift.

    ``scores[s]`` compares the partial map with ``np.roll(entry, s, axis=1)``.
    """
    w = color.shape[1]
    n_obs = observed.sum()
    vs, us = np.nonzero(observed)
    obs = color[vs, us]
    scores = np.empty(w)
    for s in range(w):
        diff = obs - entry[vs, (us - s) % w]
        scores[s] = np.sum(diff * diff) / n_obs
    return scores


def complete_nn(color, lib: PanoLibrary, observed=None) -> NNMatch:
    """Fill unobserved pixels from the best-matching, best-rotated library panorama.

    Ties are broken by library order and then by the smallest shift.
    """
    color, observed = _as_partial(color, observed)
    if len(lib) == 0:
        raise ValueError("panorama library is empty")
    if not observed.any():
        raise ValueError("partial panorama has no observed pixels")
    best = None
    for entry_id, img in lib.entries:
        if img.shape != color.shape:
            raise ValueError(f"library entry {entry_id!r} shape {img.shape} != partial shape {color.shape}")
        scores = rotation_scores(color, observed, img)
        s = int(np.argmin(scores))
        if best is None or scores[s] < best[2]:
            best = (entry_id, s, float(scores[s]), img)
    entry_id, shift, score, img = best
    out = np.roll(img, shift, axis=1).copy()
    out[observed] = color[observed]
    return NNMatch(out, entry_id, shift, score)


def complete_mirror(color, observed=None, tol: float = 1e-4, max_iter: int = 500) -> np.ndarray:
    """Fill holes with the horizontally mirrored observation, then by diffusion."""
    color, observed = _as_partial(color, observed)
    out = color.copy()
    mirrored = observed[:, ::-1]
    take = ~observed & mirrored
    out[take] = color[:, ::-1][take]
    known = observed | take
    if not known.all():
        out = fill_holes(np.where(known[..., None], out, 0.0), known, tol=tol, max_iter=max_iter)
    return out
