"""Object association across a demonstration video.

Associates regions of interest with stable object identities by running
two routes in parallel and merging them per frame:

* an appearance route that matches RoI features against a dictionary of
  known objects seeded from the first frame, and
* a motion route of constant-velocity trackers updated by greedy IoU.

The per-frame output distinguishes every box that received an identity
from the subset the user is actually touching (the boxes that overlap a
hand), which is what step-level object lists are built from.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError
from .geometry import BoundingBox, iou, overlaps
from .trace import DetectionFrame, check_contiguous

logger = logging.getLogger(__name__)

FeatureFn = Callable[[int, BoundingBox], Sequence[float]]


@dataclass(frozen=True)
class AssociationConfig:
    min_roi_area: int = 25
    min_score: float = 0.0
    sim_threshold: float = 0.8
    iou_threshold: float = 0.3
    max_misses: int = 5
    spawn_iou: float = 0.3
    feature_alpha: float = 0.3

    def __post_init__(self):
        if not (0.0 < self.sim_threshold <= 1.0):
            raise InputError(f"sim_threshold must be in (0, 1], got {self.sim_threshold}")
        if not (0.0 < self.iou_threshold <= 1.0):
            raise InputError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if not (0.0 <= self.feature_alpha <= 1.0):
            raise InputError(f"feature_alpha must be in [0, 1], got {self.feature_alpha}")
        if self.max_misses < 0:
            raise InputError(f"max_misses must be >= 0, got {self.max_misses}")


def unit_normalize(values: Sequence[float]) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise InputError("feature must be a non-empty 1-d vector")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise InputError("cannot normalize a zero feature vector")
    return vec / norm


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of unit vectors; callers normalize on ingestion."""
    if a.shape != b.shape:
        raise InputError(f"feature dimensions differ: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB (floats in [0, 1]) to HSV with all channels in [0, 1]."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    safe = np.where(delta == 0.0, 1.0, delta)
    h = np.zeros_like(maxc)
    h = np.where(maxc == r, ((g - b) / safe) % 6.0, h)
    h = np.where((maxc == g) & (maxc != r), (b - r) / safe + 2.0, h)
    h = np.where((maxc == b) & (maxc != r) & (maxc != g), (r - g) / safe + 4.0, h)
    h = np.where(delta == 0.0, 0.0, h) / 6.0
    s = np.where(maxc == 0.0, 0.0, delta / np.where(maxc == 0.0, 1.0, maxc))
    return np.stack([h, s, maxc], axis=-1)


def hsv_histogram(image: np.ndarray, box: BoundingBox, bins: int = 8) -> tuple[float, ...]:
    """Unit-length color descriptor: per-channel HSV histograms of a crop.

    Fallback feature for RoIs that arrive without an embedded descriptor,
    when the source frames are available.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InputError("image must be HxWx3")
    height, width = image.shape[:2]
    x0 = max(0, int(box.x_min))
    y0 = max(0, int(box.y_min))
    x1 = min(width, int(box.x_max))
    y1 = min(height, int(box.y_max))
    if x1 <= x0 or y1 <= y0:
        raise InputError(f"box {box} does not intersect a {width}x{height} image")
    crop = image[y0:y1, x0:x1].astype(np.float64) / 255.0
    hsv = _rgb_to_hsv(crop)
    parts = [
        np.histogram(hsv[..., channel], bins=bins, range=(0.0, 1.0))[0]
        for channel in range(3)
    ]
    return tuple(unit_normalize(np.concatenate(parts).astype(np.float64)))


@dataclass
class ObjectEntry:
    """Dictionary entry for one known object."""

    object_id: int
    label: Optional[str]
    feature: np.ndarray  # unit length
    last_box: BoundingBox
    last_seen: int


@dataclass
class _Tracker:
    object_id: int
    box: BoundingBox
    velocity: tuple[float, float] = (0.0, 0.0)
    misses: int = 0

    def predict(self) -> BoundingBox:
        dx, dy = self.velocity
        return self.box.shifted(int(round(dx)), int(round(dy)))

    def update(self, box: BoundingBox) -> None:
        old_cx, old_cy = self.box.center
        new_cx, new_cy = box.center
        self.velocity = (new_cx - old_cx, new_cy - old_cy)
        self.box = box
        self.misses = 0

    def reseat(self, box: BoundingBox) -> None:
        # Appearance re-found the object away from where motion predicted
        # it; restart from rest rather than trust a stale velocity.
        self.box = box
        self.velocity = (0.0, 0.0)
        self.misses = 0


@dataclass(frozen=True)
class AssociatedBox:
    object_id: int
    box: BoundingBox
    label: Optional[str]
    source: str  # "detected" (appearance) or "tracked" (motion)


@dataclass
class FrameAssociations:
    frame_index: int
    assigned: list[AssociatedBox] = field(default_factory=list)
    o_boxes: list[AssociatedBox] = field(default_factory=list)


@dataclass
class AssociationResult:
    frames: list[FrameAssociations]
    objects: dict[int, ObjectEntry]

    def first_interactions(self) -> dict[int, int]:
        """First frame each object id appears among the touched boxes."""
        first: dict[int, int] = {}
        for frame in self.frames:
            for assoc in frame.o_boxes:
                first.setdefault(assoc.object_id, frame.frame_index)
        return first


def _feature_for(
    frame_index: int, box: BoundingBox, feature_fn: Optional[FeatureFn]
) -> np.ndarray:
    if box.feature is not None:
        return unit_normalize(box.feature)
    if feature_fn is not None:
        return unit_normalize(feature_fn(frame_index, box))
    raise InputError(
        f"frame {frame_index}: box has no embedded feature and no feature_fn was given"
    )


def _match_dictionary(
    features: list[np.ndarray],
    objects: dict[int, ObjectEntry],
    sim_threshold: float,
) -> dict[int, int]:
    """Greedy one-to-one appearance matching: roi index -> object id.

    Pairs are taken best-similarity first; equal similarities go to the
    lowest object id.
    """
    candidates = []
    for roi_idx, feat in enumerate(features):
        for object_id in sorted(objects):
            sim = cosine_similarity(feat, objects[object_id].feature)
            if sim >= sim_threshold:
                candidates.append((-sim, object_id, roi_idx))
    candidates.sort()
    matched: dict[int, int] = {}
    used_objects: set[int] = set()
    for _, object_id, roi_idx in candidates:
        if roi_idx in matched or object_id in used_objects:
            continue
        matched[roi_idx] = object_id
        used_objects.add(object_id)
    return matched


def associate_trace(
    frames: Sequence[DetectionFrame],
    config: AssociationConfig | None = None,
    feature_fn: Optional[FeatureFn] = None,
) -> AssociationResult:
    """Run the full association loop over a detection trace.

    The first frame must carry labeled object boxes; they seed the object
    dictionary and define the identity space for the rest of the video.
    """
    config = config or AssociationConfig()
    frames = list(frames)
    check_contiguous(frames)
    if not frames:
        raise InputError("cannot associate an empty trace")
    if not frames[0].objects:
        raise InputError("first frame must contain seed objects")

    objects: dict[int, ObjectEntry] = {}
    trackers: dict[int, _Tracker] = {}
    out_frames: list[FrameAssociations] = []

    for object_id, seed in enumerate(frames[0].objects):
        feature = _feature_for(0, seed, feature_fn)
        objects[object_id] = ObjectEntry(
            object_id=object_id,
            label=seed.label,
            feature=feature,
            last_box=seed,
            last_seen=0,
        )
        trackers[object_id] = _Tracker(object_id=object_id, box=seed)

    seed_assigned = [
        AssociatedBox(object_id=oid, box=entry.last_box, label=entry.label, source="detected")
        for oid, entry in sorted(objects.items())
    ]
    out_frames.append(
        FrameAssociations(
            frame_index=0,
            assigned=seed_assigned,
            o_boxes=[a for a in seed_assigned if _touches_hand(a.box, frames[0].hands)],
        )
    )

    for frame in frames[1:]:
        rois = [
            roi
            for roi in frame.rois
            if roi.area >= config.min_roi_area
            and (roi.score is None or roi.score >= config.min_score)
        ]
        features = [_feature_for(frame.frame_index, roi, feature_fn) for roi in rois]

        # Appearance route.
        d_match = _match_dictionary(features, objects, config.sim_threshold)
        d_boxes = {d_match[roi_idx]: rois[roi_idx] for roi_idx in d_match}

        # Motion route: predict, then greedily consume RoIs by IoU.
        tracked: dict[int, BoundingBox] = {}
        used_rois: set[int] = set()
        for object_id in sorted(trackers):
            tracker = trackers[object_id]
            predicted = tracker.predict()
            best_idx, best_iou = -1, 0.0
            for roi_idx, roi in enumerate(rois):
                if roi_idx in used_rois:
                    continue
                value = iou(predicted, roi)
                if value > best_iou:
                    best_idx, best_iou = roi_idx, value
            if best_idx >= 0 and best_iou >= config.iou_threshold:
                used_rois.add(best_idx)
                tracker.update(rois[best_idx])
                tracked[object_id] = tracker.box
            else:
                tracker.misses += 1
                tracker.box = predicted
        for object_id in [oid for oid, t in trackers.items() if t.misses > config.max_misses]:
            logger.debug("frame %d: dropping tracker for object %d", frame.frame_index, object_id)
            del trackers[object_id]

        # Appearance matches that motion lost get their tracker restarted.
        for object_id, box in d_boxes.items():
            best = max((iou(box, t.box) for t in trackers.values()), default=0.0)
            if best < config.spawn_iou:
                if object_id in trackers:
                    trackers[object_id].reseat(box)
                else:
                    trackers[object_id] = _Tracker(object_id=object_id, box=box)

        for roi_idx, object_id in d_match.items():
            entry = objects[object_id]
            blended = (1.0 - config.feature_alpha) * entry.feature
            blended = blended + config.feature_alpha * features[roi_idx]
            entry.feature = unit_normalize(blended)
            entry.last_box = rois[roi_idx]
            entry.last_seen = frame.frame_index
        for object_id, box in tracked.items():
            if object_id not in d_boxes:
                objects[object_id].last_box = box
                objects[object_id].last_seen = frame.frame_index

        assigned: dict[int, AssociatedBox] = {}
        for object_id, box in sorted(d_boxes.items()):
            assigned[object_id] = AssociatedBox(
                object_id=object_id, box=box, label=objects[object_id].label, source="detected"
            )
        for object_id, box in sorted(tracked.items()):
            if object_id not in assigned:
                assigned[object_id] = AssociatedBox(
                    object_id=object_id, box=box, label=objects[object_id].label, source="tracked"
                )
        assigned_list = [assigned[oid] for oid in sorted(assigned)]
        out_frames.append(
            FrameAssociations(
                frame_index=frame.frame_index,
                assigned=assigned_list,
                o_boxes=[a for a in assigned_list if _touches_hand(a.box, frame.hands)],
            )
        )

    return AssociationResult(frames=out_frames, objects=objects)


def _touches_hand(box: BoundingBox, hands: Sequence[BoundingBox]) -> bool:
    return any(overlaps(box, hand) for hand in hands)
