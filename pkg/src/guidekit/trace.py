"""Detection trace and saliency mask file formats.

A detection trace is newline-delimited JSON, one record per video frame:

    {"frame_index": 0, "hands": [box...], "rois": [box...], "objects": [box...]}

where a box is ``{"x_min", "y_min", "x_max", "y_max"}`` plus optional
``"label"``, ``"score"`` and ``"feature"`` (a list of reals).  Saliency
masks are binary PGM (P5) images where any nonzero pixel is salient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .errors import InputError, LoadError
from .geometry import BoundingBox, check_box


@dataclass
class DetectionFrame:
    frame_index: int
    hands: list[BoundingBox] = field(default_factory=list)
    rois: list[BoundingBox] = field(default_factory=list)
    objects: list[BoundingBox] = field(default_factory=list)


def box_to_json(box: BoundingBox) -> dict:
    record = {
        "x_min": box.x_min,
        "y_min": box.y_min,
        "x_max": box.x_max,
        "y_max": box.y_max,
    }
    if box.label is not None:
        record["label"] = box.label
    if box.score is not None:
        record["score"] = box.score
    if box.feature is not None:
        record["feature"] = list(box.feature)
    return record


def box_from_json(record: dict, context: str = "box") -> BoundingBox:
    try:
        feature = record.get("feature")
        box = BoundingBox(
            x_min=int(record["x_min"]),
            y_min=int(record["y_min"]),
            x_max=int(record["x_max"]),
            y_max=int(record["y_max"]),
            label=record.get("label"),
            score=record.get("score"),
            feature=tuple(float(v) for v in feature) if feature is not None else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"{context}: malformed box record: {exc}") from exc
    try:
        return check_box(box, context)
    except InputError as exc:
        raise LoadError(str(exc)) from exc


def frame_to_json(frame: DetectionFrame) -> dict:
    return {
        "frame_index": frame.frame_index,
        "hands": [box_to_json(b) for b in frame.hands],
        "rois": [box_to_json(b) for b in frame.rois],
        "objects": [box_to_json(b) for b in frame.objects],
    }


def frame_from_json(record: dict, context: str = "frame") -> DetectionFrame:
    if "frame_index" not in record:
        raise LoadError(f"{context}: missing frame_index")
    return DetectionFrame(
        frame_index=int(record["frame_index"]),
        hands=[box_from_json(b, f"{context}.hands") for b in record.get("hands", [])],
        rois=[box_from_json(b, f"{context}.rois") for b in record.get("rois", [])],
        objects=[box_from_json(b, f"{context}.objects") for b in record.get("objects", [])],
    )


def check_contiguous(frames: list[DetectionFrame]) -> list[DetectionFrame]:
    """Frames must be sorted by index and contiguous from 0."""
    for i, frame in enumerate(frames):
        if frame.frame_index != i:
            raise InputError(
                f"trace not contiguous: expected frame_index {i}, got {frame.frame_index}"
            )
    return frames


def loads_trace(text: str) -> list[DetectionFrame]:
    frames = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LoadError(f"trace line {lineno}: invalid JSON: {exc}") from exc
        frames.append(frame_from_json(record, f"trace line {lineno}"))
    try:
        return check_contiguous(frames)
    except InputError as exc:
        raise LoadError(str(exc)) from exc


def dumps_trace(frames: Iterable[DetectionFrame]) -> str:
    return "".join(json.dumps(frame_to_json(f)) + "\n" for f in frames)


def load_trace(path: Union[str, Path]) -> list[DetectionFrame]:
    return loads_trace(Path(path).read_text(encoding="utf-8"))


def save_trace(frames: Iterable[DetectionFrame], path: Union[str, Path]) -> None:
    Path(path).write_text(dumps_trace(frames), encoding="utf-8")


def load_pgm(path: Union[str, Path]) -> np.ndarray:
    """Read a binary PGM (P5) image into a {0,1} uint8 array, nonzero = salient."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise LoadError("pgm: truncated header")
        char = data[pos : pos + 1]
        if char == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        elif char.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise LoadError(f"pgm: expected P5 magic, got {tokens[0]!r}")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise LoadError(f"pgm: malformed header: {exc}") from exc
    if maxval <= 0 or maxval > 255:
        raise LoadError(f"pgm: unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    if pixels.size != width * height:
        raise LoadError("pgm: truncated pixel data")
    return (pixels.reshape(height, width) > 0).astype(np.uint8)


def save_pgm(mask: np.ndarray, path: Union[str, Path]) -> None:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise InputError("pgm: mask must be 2-dimensional")
    height, width = mask.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    body = ((mask > 0).astype(np.uint8) * 255).tobytes()
    Path(path).write_bytes(header + body)
