"""Normalized cross-correlation template search.

Used to carry a labeled box from one frame into the next: the labeled
crop becomes the template and nearby positions in the following frame are
scored by NCC, which is invariant to uniform brightness and contrast
changes between frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry import BoundingBox
from .imaging import to_grayscale

_EPS = 1e-9


def ncc(template: np.ndarray, patch: np.ndarray) -> float:
    """Pearson correlation of two equal-shape grayscale patches in [-1, 1].

    Flat patches have no contrast to correlate, so the score degenerates
    to 1.0 when both patches are identical and 0.0 otherwise.
    """
    template = np.asarray(template, dtype=np.float64)
    patch = np.asarray(patch, dtype=np.float64)
    if template.shape != patch.shape:
        raise InputError(f"shape mismatch: template {template.shape} vs patch {patch.shape}")
    if template.size == 0:
        raise InputError("cannot correlate empty patches")
    t = template - template.mean()
    p = patch - patch.mean()
    denom = np.sqrt((t * t).sum() * (p * p).sum())
    if denom < _EPS:
        return 1.0 if np.array_equal(template, patch) else 0.0
    return float((t * p).sum() / denom)


@dataclass(frozen=True)
class MatchResult:
    box: BoundingBox
    score: float


def search_template(
    image: np.ndarray,
    template: np.ndarray,
    around: BoundingBox,
    search_radius: int = 16,
) -> MatchResult:
    """Find the best NCC placement of ``template`` near ``around``.

    Candidate top-left corners range over +-search_radius around the
    reference box, clamped so the template stays inside the image.  Ties
    resolve toward the smallest (y, x) so repeated runs agree exactly.
    """
    gray = to_grayscale(image)
    template = np.asarray(template, dtype=np.float64)
    if template.ndim != 2:
        raise InputError("template must be a 2-d grayscale array")
    th, tw = template.shape
    ih, iw = gray.shape
    if th > ih or tw > iw:
        raise InputError(f"template {template.shape} larger than image {gray.shape}")
    if search_radius < 0:
        raise InputError(f"search_radius must be >= 0, got {search_radius}")

    x_lo = max(0, around.x_min - search_radius)
    x_hi = min(iw - tw, around.x_min + search_radius)
    y_lo = max(0, around.y_min - search_radius)
    y_hi = min(ih - th, around.y_min + search_radius)
    if x_hi < x_lo or y_hi < y_lo:
        # Reference box sits so far outside that no in-bounds placement
        # remains; clamp to the nearest valid corner.
        x_lo = x_hi = min(max(0, around.x_min), iw - tw)
        y_lo = y_hi = min(max(0, around.y_min), ih - th)

    t = template - template.mean()
    t_energy = (t * t).sum()
    best_score = -2.0
    best_xy = (x_lo, y_lo)
    for y in range(y_lo, y_hi + 1):
        for x in range(x_lo, x_hi + 1):
            patch = gray[y : y + th, x : x + tw]
            p = patch - patch.mean()
            denom = np.sqrt(t_energy * (p * p).sum())
            if denom < _EPS:
                score = 1.0 if np.array_equal(template, patch) else 0.0
            else:
                score = float((t * p).sum() / denom)
            if score > best_score:
                best_score = score
                best_xy = (x, y)
    x, y = best_xy
    return MatchResult(
        box=BoundingBox(x_min=x, y_min=y, x_max=x + tw, y_max=y + th),
        score=best_score,
    )
