"""Sparse labeling with template-based propagation.

Users place class-labeled boxes on a handful of keyframes; propagation
then carries each box forward frame by frame with NCC template search
until the next keyframe takes over, the match quality collapses, or the
video ends.  The template is always the original keyframe crop, never a
propagated one, so matching errors cannot compound into drift.

Moving a keyframe invalidates the propagated boxes it produced (up to
the next keyframe), which keeps every propagated box traceable to a
live user label.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import EditError, LoadError, PropagationError
from .geometry import BoundingBox, check_box
from .imaging import to_grayscale
from .matching import search_template

logger = logging.getLogger(__name__)

KEYFRAME = "keyframe"
PROPAGATED = "propagated"

DEFAULT_SEARCH_RADIUS = 16
DEFAULT_STOP_THRESHOLD = 0.6


@dataclass(frozen=True)
class PropagationConfig:
    search_radius: int = DEFAULT_SEARCH_RADIUS
    stop_threshold: float = DEFAULT_STOP_THRESHOLD


@dataclass(frozen=True)
class LabelEntry:
    """One labeled box on one frame, as seen by consumers."""

    frame_index: int
    box: BoundingBox
    class_name: str
    track_id: int
    source: str  # KEYFRAME or PROPAGATED
    score: float = 1.0


@dataclass
class LabelTrack:
    track_id: int
    class_name: str
    keyframes: dict[int, BoundingBox] = field(default_factory=dict)
    propagated: dict[int, tuple[BoundingBox, float]] = field(default_factory=dict)

    def next_keyframe_after(self, frame_index: int) -> Optional[int]:
        later = [f for f in self.keyframes if f > frame_index]
        return min(later) if later else None


@dataclass
class AnnotationSet:
    video_ref: str
    revision: int = 0
    tracks: dict[int, LabelTrack] = field(default_factory=dict)
    next_track_id: int = 0

    # -- editing ---------------------------------------------------------

    def add_track(self, class_name: str, frame_index: int, box: BoundingBox) -> int:
        if not class_name:
            raise EditError("class name must be non-empty")
        check_box(box, "keyframe label")
        track_id = self.next_track_id
        self.next_track_id += 1
        self.tracks[track_id] = LabelTrack(
            track_id=track_id, class_name=class_name, keyframes={frame_index: box}
        )
        self.revision += 1
        return track_id

    def set_keyframe(self, track_id: int, frame_index: int, box: BoundingBox) -> None:
        """Place or move a keyframe label.

        Propagated boxes between this frame and the next keyframe were
        derived from the old label, so they are dropped here and rebuilt
        by the next propagation pass.
        """
        track = self._track(track_id)
        check_box(box, "keyframe label")
        track.keyframes[frame_index] = box
        self._invalidate(track, frame_index)
        self.revision += 1

    def remove_keyframe(self, track_id: int, frame_index: int) -> None:
        track = self._track(track_id)
        if frame_index not in track.keyframes:
            raise EditError(f"track {track_id} has no keyframe at frame {frame_index}")
        del track.keyframes[frame_index]
        self._invalidate(track, frame_index)
        if not track.keyframes:
            del self.tracks[track_id]
        self.revision += 1

    def _invalidate(self, track: LabelTrack, frame_index: int) -> None:
        stop = track.next_keyframe_after(frame_index)
        for f in [
            f for f in track.propagated if f >= frame_index and (stop is None or f < stop)
        ]:
            del track.propagated[f]

    def _track(self, track_id: int) -> LabelTrack:
        if track_id not in self.tracks:
            raise EditError(f"no label track {track_id}")
        return self.tracks[track_id]

    # -- propagation -----------------------------------------------------

    def propagate_track(
        self,
        track_id: int,
        frames: Sequence[np.ndarray],
        config: PropagationConfig | None = None,
    ) -> int:
        """Fill the gaps after each keyframe of one track.

        Returns the number of propagated boxes written.  Frames where the
        best match scores below the stop threshold end that keyframe's
        run: a bad match means the object moved beyond recognition or out
        of view, and every later match would inherit the error.
        """
        config = config or PropagationConfig()
        track = self._track(track_id)
        written = 0
        for start in sorted(track.keyframes):
            seed_box = track.keyframes[start]
            if start >= len(frames):
                raise PropagationError(
                    f"track {track_id} keyframe at {start} is outside the "
                    f"{len(frames)}-frame video"
                )
            seed_gray = to_grayscale(frames[start])
            template = seed_gray[seed_box.y_min : seed_box.y_max, seed_box.x_min : seed_box.x_max]
            if template.size == 0:
                raise PropagationError(
                    f"track {track_id} keyframe at {start} has an empty crop"
                )
            stop = track.next_keyframe_after(start)
            end = len(frames) if stop is None else stop
            previous = seed_box
            for frame_index in range(start + 1, end):
                if frame_index in track.propagated:
                    previous = track.propagated[frame_index][0]
                    continue
                match = search_template(
                    frames[frame_index], template, previous, config.search_radius
                )
                if match.score < config.stop_threshold:
                    logger.debug(
                        "track %d: stopping at frame %d (score %.3f)",
                        track_id,
                        frame_index,
                        match.score,
                    )
                    break
                track.propagated[frame_index] = (match.box, match.score)
                previous = match.box
                written += 1
        if written:
            self.revision += 1
        return written

    def propagate_all(
        self, frames: Sequence[np.ndarray], config: PropagationConfig | None = None
    ) -> int:
        return sum(
            self.propagate_track(track_id, frames, config) for track_id in sorted(self.tracks)
        )

    # -- queries ---------------------------------------------------------

    def labels_at(self, frame_index: int) -> list[LabelEntry]:
        entries = []
        for track_id in sorted(self.tracks):
            track = self.tracks[track_id]
            if frame_index in track.keyframes:
                entries.append(
                    LabelEntry(
                        frame_index=frame_index,
                        box=track.keyframes[frame_index],
                        class_name=track.class_name,
                        track_id=track_id,
                        source=KEYFRAME,
                    )
                )
            elif frame_index in track.propagated:
                box, score = track.propagated[frame_index]
                entries.append(
                    LabelEntry(
                        frame_index=frame_index,
                        box=box,
                        class_name=track.class_name,
                        track_id=track_id,
                        source=PROPAGATED,
                        score=score,
                    )
                )
        return entries

    def all_labels(self) -> list[LabelEntry]:
        frames = set()
        for track in self.tracks.values():
            frames.update(track.keyframes)
            frames.update(track.propagated)
        out = []
        for frame_index in sorted(frames):
            out.extend(self.labels_at(frame_index))
        return out

    def class_names(self) -> list[str]:
        return sorted({t.class_name for t in self.tracks.values()})


# -- persistence ---------------------------------------------------------


def _box_json(box: BoundingBox) -> dict:
    return {"x_min": box.x_min, "y_min": box.y_min, "x_max": box.x_max, "y_max": box.y_max}


def _box_from(record: dict, context: str) -> BoundingBox:
    try:
        return BoundingBox(
            x_min=int(record["x_min"]),
            y_min=int(record["y_min"]),
            x_max=int(record["x_max"]),
            y_max=int(record["y_max"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"{context}: bad box record: {exc}") from exc


def annotations_to_json(annotations: AnnotationSet) -> dict:
    return {
        "video_ref": annotations.video_ref,
        "revision": annotations.revision,
        "next_track_id": annotations.next_track_id,
        "tracks": [
            {
                "track_id": track.track_id,
                "class_name": track.class_name,
                "keyframes": [
                    {"frame_index": f, "box": _box_json(b)}
                    for f, b in sorted(track.keyframes.items())
                ],
                "propagated": [
                    {"frame_index": f, "box": _box_json(b), "score": s}
                    for f, (b, s) in sorted(track.propagated.items())
                ],
            }
            for track in (annotations.tracks[tid] for tid in sorted(annotations.tracks))
        ],
    }


def annotations_from_json(record: dict) -> AnnotationSet:
    if not isinstance(record, dict):
        raise LoadError("annotations: expected an object")
    try:
        annotations = AnnotationSet(
            video_ref=str(record["video_ref"]),
            revision=int(record.get("revision", 0)),
            next_track_id=int(record.get("next_track_id", 0)),
        )
        for track_json in record.get("tracks", []):
            track = LabelTrack(
                track_id=int(track_json["track_id"]),
                class_name=str(track_json["class_name"]),
            )
            for kf in track_json.get("keyframes", []):
                track.keyframes[int(kf["frame_index"])] = _box_from(
                    kf["box"], f"track {track.track_id} keyframe"
                )
            for pf in track_json.get("propagated", []):
                track.propagated[int(pf["frame_index"])] = (
                    _box_from(pf["box"], f"track {track.track_id} propagated"),
                    float(pf["score"]),
                )
            if track.track_id in annotations.tracks:
                raise LoadError(f"duplicate track id {track.track_id}")
            annotations.tracks[track.track_id] = track
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"annotations: {exc}") from exc
    if annotations.tracks:
        top = max(annotations.tracks) + 1
        annotations.next_track_id = max(annotations.next_track_id, top)
    return annotations


def save_annotations(annotations: AnnotationSet, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(annotations_to_json(annotations), indent=2) + "\n")


def load_annotations(path: Union[str, Path]) -> AnnotationSet:
    try:
        record = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(f"annotations file is not valid JSON: {exc}") from exc
    return annotations_from_json(record)
