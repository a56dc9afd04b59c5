"""Randomized detection traces with known object-interaction ground truth.

The generator owns all the facts (where every object is, when the hand
touches what, when RoIs vanish), so a test can check the association
pipeline's per-frame output against truth it never computed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from guidekit.geometry import BoundingBox
from guidekit.trace import DetectionFrame

_CELLS = [(col * 160, row * 144) for row in range(3) for col in range(4)]
_BOX_SIZE = 40
_HAND_SIZE = 50


@dataclass
class TruthTrace:
    frames: list[DetectionFrame]
    labels: list[str]
    touched: list[set[int]]  # per frame: object ids the hand overlaps


def _orthogonalish_features(rng: np.random.Generator, count: int, dim: int = 16):
    features = []
    while len(features) < count:
        candidate = rng.normal(size=dim)
        candidate /= np.linalg.norm(candidate)
        if all(abs(float(np.dot(candidate, f))) < 0.6 for f in features):
            features.append(candidate)
    return features


def make_trace(seed: int, frame_count: int = 120) -> TruthTrace:
    rng = np.random.default_rng(seed)
    object_count = int(rng.integers(2, 6))
    cells = list(_CELLS)
    rng.shuffle(cells)
    homes = []
    for i in range(object_count):
        cx, cy = cells[i]
        jitter_x = int(rng.integers(20, 60))
        jitter_y = int(rng.integers(20, 60))
        homes.append((cx + jitter_x, cy + jitter_y))
    park_x, park_y = cells[object_count]  # a free cell, overlaps nothing
    features = _orthogonalish_features(rng, object_count)
    labels = [f"item-{i}" for i in range(object_count)]
    phases = [float(rng.uniform(0, 2 * np.pi)) for _ in range(object_count)]

    # Interaction windows: disjoint, separated, each touching one object.
    windows = []
    cursor = int(rng.integers(5, 15))
    while cursor + 15 < frame_count and len(windows) < 4:
        length = int(rng.integers(15, 31))
        end = min(cursor + length - 1, frame_count - 1)
        windows.append((cursor, end, int(rng.integers(0, object_count))))
        cursor = end + 1 + int(rng.integers(20, 30))

    # One object may lose its RoI for a stretch while untouched.
    vanish = None
    if object_count >= 2 and rng.random() < 0.7:
        victim = int(rng.integers(0, object_count))
        start = int(rng.integers(10, frame_count - 20))
        length = int(rng.integers(4, 13))
        span = set(range(start, start + length))
        if not any(
            obj == victim and span & set(range(s, e + 1)) for s, e, obj in windows
        ):
            vanish = (victim, span)

    def box_at(obj: int, frame: int, label=None, feature=None) -> BoundingBox:
        hx, hy = homes[obj]
        dx = int(round(4 * np.sin(2 * np.pi * frame / 60 + phases[obj])))
        dy = int(round(4 * np.cos(2 * np.pi * frame / 60 + phases[obj])))
        return BoundingBox(
            x_min=hx + dx,
            y_min=hy + dy,
            x_max=hx + dx + _BOX_SIZE,
            y_max=hy + dy + _BOX_SIZE,
            label=label,
            feature=feature,
        )

    frames = []
    touched_per_frame = []
    for frame_index in range(frame_count):
        target = None
        for start, end, obj in windows:
            if start <= frame_index <= end:
                target = obj
                break
        if target is None:
            hand = BoundingBox(
                x_min=park_x + 30,
                y_min=park_y + 30,
                x_max=park_x + 30 + _HAND_SIZE,
                y_max=park_y + 30 + _HAND_SIZE,
            )
        else:
            centered = box_at(target, frame_index)
            hand = BoundingBox(
                x_min=centered.x_min - 5,
                y_min=centered.y_min - 5,
                x_max=centered.x_min - 5 + _HAND_SIZE,
                y_max=centered.y_min - 5 + _HAND_SIZE,
            )
        rois = []
        for obj in range(object_count):
            if vanish is not None and obj == vanish[0] and frame_index in vanish[1]:
                continue
            rois.append(box_at(obj, frame_index, feature=tuple(features[obj])))
        objects = (
            [
                box_at(obj, 0, label=labels[obj], feature=tuple(features[obj]))
                for obj in range(object_count)
            ]
            if frame_index == 0
            else []
        )
        frames.append(
            DetectionFrame(
                frame_index=frame_index, hands=[hand], rois=rois, objects=objects
            )
        )
        touched = set()
        for obj in range(object_count):
            if vanish is not None and obj == vanish[0] and frame_index in vanish[1]:
                continue
            box = box_at(obj, frame_index)
            if (
                min(hand.x_max, box.x_max) > max(hand.x_min, box.x_min)
                and min(hand.y_max, box.y_max) > max(hand.y_min, box.y_min)
            ):
                touched.add(obj)
        touched_per_frame.append(touched)
    return TruthTrace(frames=frames, labels=labels, touched=touched_per_frame)
