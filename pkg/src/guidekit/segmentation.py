"""Working-step boundary detection from hand-object interaction.

The pipeline turns per-frame hand and region-of-interest boxes into an
ordered list of working steps: overlap tests yield a binary interaction
signal, a normalized Hanning window smooths it, an inclusive threshold
re-binarizes it, and surviving runs of sufficient length become steps.
A boundary agreement score compares two step lists on a [0, 1] scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import InputError
from .geometry import BoundingBox, overlaps
from .trace import DetectionFrame, check_contiguous

DEFAULT_WINDOW_SIZE = 19
DEFAULT_THRESHOLD = 0.5
DEFAULT_MIN_STEP_FRAMES = 12
DEFAULT_MIN_ROI_AREA = 25


@dataclass(frozen=True)
class SegmentationConfig:
    window_size: int = DEFAULT_WINDOW_SIZE
    threshold: float = DEFAULT_THRESHOLD
    min_step_frames: int = DEFAULT_MIN_STEP_FRAMES
    min_roi_area: int = DEFAULT_MIN_ROI_AREA

    def __post_init__(self):
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise InputError(f"window_size must be odd and >= 3, got {self.window_size}")
        if not (0.0 < self.threshold < 1.0):
            raise InputError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.min_step_frames < 1:
            raise InputError(f"min_step_frames must be >= 1, got {self.min_step_frames}")


@dataclass(frozen=True)
class StepSegment:
    start_frame: int
    end_frame: int  # inclusive
    step_id: int

    def __post_init__(self):
        if self.start_frame > self.end_frame:
            raise InputError(f"segment start {self.start_frame} after end {self.end_frame}")

    @property
    def frame_count(self) -> int:
        return self.end_frame - self.start_frame + 1

    def contains(self, frame_index: int) -> bool:
        return self.start_frame <= frame_index <= self.end_frame


def check_segments(segments: Sequence[StepSegment], context: str = "segments") -> None:
    """Segments must be disjoint and strictly ordered."""
    for prev, cur in zip(segments, segments[1:]):
        if cur.start_frame <= prev.end_frame:
            raise InputError(
                f"{context}: segment [{cur.start_frame},{cur.end_frame}] overlaps or precedes "
                f"[{prev.start_frame},{prev.end_frame}]"
            )


def rois_from_saliency(mask: np.ndarray, min_roi_area: int = DEFAULT_MIN_ROI_AREA) -> list[BoundingBox]:
    """Extract one tight box per 4-connected salient component.

    Components smaller than ``min_roi_area`` pixels are treated as mask
    noise and dropped.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise InputError("saliency mask must be 2-dimensional")
    binary = mask > 0
    labeled, count = ndimage.label(binary)  # default structure is 4-connected
    if count == 0:
        return []
    areas = np.bincount(labeled.ravel())
    boxes = []
    for component, slices in enumerate(ndimage.find_objects(labeled), start=1):
        if slices is None or areas[component] < min_roi_area:
            continue
        ys, xs = slices
        boxes.append(BoundingBox(x_min=xs.start, y_min=ys.start, x_max=xs.stop, y_max=ys.stop))
    boxes.sort(key=lambda b: (b.y_min, b.x_min))
    return boxes


def interaction_signal(frames: Sequence[DetectionFrame]) -> np.ndarray:
    """Binary signal: 1 where some hand box and some RoI box overlap.

    Overlap means strictly positive intersection area, so boxes that only
    touch along an edge do not count.
    """
    check_contiguous(list(frames))
    values = np.zeros(len(frames), dtype=np.int64)
    for i, frame in enumerate(frames):
        values[i] = int(
            any(overlaps(hand, roi) for hand in frame.hands for roi in frame.rois)
        )
    return values


def hanning_kernel(window_size: int) -> np.ndarray:
    """Hanning taper w[n] = 0.5(1 - cos(2*pi*n/(N-1))), normalized to unit sum."""
    window = np.hanning(window_size)
    return window / window.sum()


def smooth_signal(signal: Sequence[float], window_size: int) -> np.ndarray:
    """Convolve with a unit-sum Hanning window, reflect-padded at the ends.

    Unit normalization keeps the output interpretable as an interaction
    probability; reflect padding preserves constant signals so steady
    interaction at a boundary is not eroded.
    """
    values = np.asarray(signal, dtype=np.float64)
    if values.ndim != 1:
        raise InputError("signal must be 1-dimensional")
    if window_size % 2 == 0 or window_size < 1:
        raise InputError(f"window_size must be odd, got {window_size}")
    if window_size > values.size:
        raise InputError(
            f"window_size {window_size} longer than signal of {values.size} frames"
        )
    if window_size == 1:
        return values.copy()
    half = (window_size - 1) // 2
    padded = np.pad(values, half, mode="reflect")
    smoothed = np.convolve(padded, hanning_kernel(window_size), mode="valid")
    return np.clip(smoothed, 0.0, 1.0)


def threshold_signal(signal: Sequence[float], threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Binarize with an inclusive comparison: 1 where value >= threshold."""
    values = np.asarray(signal, dtype=np.float64)
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise InputError("signal values must lie in [0, 1]")
    return (values >= threshold).astype(np.int64)


def segment_steps(
    binary: Sequence[int], min_step_frames: int = DEFAULT_MIN_STEP_FRAMES
) -> list[StepSegment]:
    """Turn maximal runs of 1s into steps, dropping runs shorter than
    ``min_step_frames`` (too brief to hold a meaningful action)."""
    values = np.asarray(binary)
    if values.size and not np.isin(values, (0, 1)).all():
        raise InputError("binary signal must contain only 0 and 1")
    padded = np.concatenate(([0], values, [0]))
    edges = np.flatnonzero(np.diff(padded))
    starts, ends = edges[::2], edges[1::2] - 1
    segments = []
    for start, end in zip(starts, ends):
        if end - start + 1 >= min_step_frames:
            segments.append(StepSegment(int(start), int(end), step_id=len(segments)))
    return segments


def segment_trace(
    frames: Sequence[DetectionFrame], config: SegmentationConfig | None = None
) -> list[StepSegment]:
    """Full boundary-detection pipeline over a detection trace."""
    config = config or SegmentationConfig()
    raw = interaction_signal(frames)
    smoothed = smooth_signal(raw, config.window_size)
    binary = threshold_signal(smoothed, config.threshold)
    return segment_steps(binary, config.min_step_frames)


def _segment_intersection(a: StepSegment, b: StepSegment) -> int:
    return max(0, min(a.end_frame, b.end_frame) - max(a.start_frame, b.start_frame) + 1)


def bda(detected: Sequence[StepSegment], manual: Sequence[StepSegment]) -> float:
    """Boundary agreement between a detected and a manual step list.

    Pairs are matched globally greedily by temporal intersection; each
    matched pair scores intersection / max(durations) and unmatched
    segments on either side score zero.  The mean is taken over
    max(len(detected), len(manual)) so the result stays in [0, 1] and is
    symmetric in its arguments.  Two empty lists agree vacuously (1.0).
    """
    check_segments(detected, "detected")
    check_segments(manual, "manual")
    if not detected and not manual:
        return 1.0
    if not detected or not manual:
        return 0.0

    pairs = []
    for i, d in enumerate(detected):
        for j, m in enumerate(manual):
            inter = _segment_intersection(d, m)
            if inter > 0:
                # Symmetric tie-break key so swapping the arguments cannot
                # change which pairs get matched.
                key = (
                    -inter,
                    min(d.start_frame, m.start_frame),
                    max(d.start_frame, m.start_frame),
                    min(d.end_frame, m.end_frame),
                    max(d.end_frame, m.end_frame),
                )
                pairs.append((key, i, j, inter))
    pairs.sort(key=lambda p: p[0])

    used_detected: set[int] = set()
    used_manual: set[int] = set()
    total = 0.0
    for _, i, j, inter in pairs:
        if i in used_detected or j in used_manual:
            continue
        used_detected.add(i)
        used_manual.add(j)
        total += inter / max(detected[i].frame_count, manual[j].frame_count)
    return total / max(len(detected), len(manual))
