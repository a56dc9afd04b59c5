"""Baseline detector built from keyframe crops.

Each class keeps a gallery of grayscale templates cut from user-placed
keyframe labels.  Detection slides every template over the image with
normalized cross-correlation and keeps score peaks that survive greedy
non-maximum suppression.  It is deliberately simple: no training loop,
fully deterministic, and good enough to close the author-test-refine
cycle before a learned detector exists.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataset import Dataset, crop
from .errors import InputError, LoadError, TrainError
from .geometry import BoundingBox, iou
from .imaging import to_grayscale
from .labeling import KEYFRAME, AnnotationSet

logger = logging.getLogger(__name__)

DETECTOR_FORMAT_VERSION = 1
DETECTOR_META_NAME = "detector.json"
DEFAULT_SCORE_THRESHOLD = 0.8
NMS_IOU = 0.5

_EPS = 1e-9


@dataclass(frozen=True)
class Template:
    class_name: str
    pixels: np.ndarray  # 2-d float64 grayscale


@dataclass
class TemplateDetector:
    templates: list[Template] = field(default_factory=list)
    score_threshold: float = DEFAULT_SCORE_THRESHOLD

    @property
    def classes(self) -> list[str]:
        return sorted({t.class_name for t in self.templates})

    def detect(
        self, image: np.ndarray, score_threshold: Optional[float] = None
    ) -> list[BoundingBox]:
        """Boxes with label and score, best first, after NMS."""
        threshold = self.score_threshold if score_threshold is None else score_threshold
        gray = to_grayscale(image)
        candidates: list[BoundingBox] = []
        for template in self.templates:
            th, tw = template.pixels.shape
            if th > gray.shape[0] or tw > gray.shape[1]:
                continue
            scores = _ncc_map(gray, template.pixels)
            ys, xs = np.nonzero(scores >= threshold)
            for y, x in zip(ys.tolist(), xs.tolist()):
                candidates.append(
                    BoundingBox(
                        x_min=x,
                        y_min=y,
                        x_max=x + tw,
                        y_max=y + th,
                        label=template.class_name,
                        score=float(scores[y, x]),
                    )
                )
        return _nms(candidates)


def _ncc_map(gray: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Correlation score for every template placement in one shot."""
    th, tw = template.shape
    n = th * tw
    t = template - template.mean()
    t_energy = float((t * t).sum())
    windows = sliding_window_view(gray, (th, tw))
    dots = np.einsum("ijkl,kl->ij", windows, t)
    wsum = windows.sum(axis=(-1, -2))
    wsq = np.einsum("ijkl,ijkl->ij", windows, windows)
    wvar = np.maximum(wsq - wsum * wsum / n, 0.0)
    denom = np.sqrt(wvar * t_energy)
    return np.where(denom < _EPS, 0.0, dots / np.maximum(denom, _EPS))


def _nms(candidates: list[BoundingBox], iou_threshold: float = NMS_IOU) -> list[BoundingBox]:
    ordered = sorted(
        candidates, key=lambda b: (-(b.score or 0.0), b.label or "", b.y_min, b.x_min)
    )
    kept: list[BoundingBox] = []
    for box in ordered:
        if all(iou(box, other) < iou_threshold for other in kept):
            kept.append(box)
    return kept


def train_baseline(
    frames: Sequence[np.ndarray],
    annotations: AnnotationSet,
    classes: Optional[Sequence[str]] = None,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> TemplateDetector:
    """Build a detector from the keyframe labels of an annotation set.

    Only user-placed keyframes contribute templates; propagated boxes
    inherit any propagation drift and would poison the gallery.  Exact
    duplicate crops are stored once.
    """
    class_list = sorted(classes) if classes is not None else annotations.class_names()
    if not class_list:
        raise TrainError("no classes to train on")
    templates: list[Template] = []
    seen: set[tuple] = set()
    for entry in annotations.all_labels():
        if entry.source != KEYFRAME or entry.class_name not in class_list:
            continue
        if entry.frame_index >= len(frames):
            raise TrainError(
                f"keyframe label on frame {entry.frame_index} but video has "
                f"{len(frames)} frames"
            )
        pixels = to_grayscale(crop(np.asarray(frames[entry.frame_index]), entry.box))
        if pixels.size == 0:
            raise TrainError(f"empty crop for class {entry.class_name!r}")
        if float(pixels.std()) < 1e-6:
            raise TrainError(
                f"crop for class {entry.class_name!r} on frame {entry.frame_index} "
                "has no contrast; correlation against it is undefined"
            )
        key = (entry.class_name, pixels.shape, pixels.tobytes())
        if key in seen:
            continue
        seen.add(key)
        templates.append(Template(class_name=entry.class_name, pixels=pixels))
    covered = {t.class_name for t in templates}
    missing = [c for c in class_list if c not in covered]
    if missing:
        raise TrainError(f"no keyframe crops for classes: {missing}")
    return TemplateDetector(templates=templates, score_threshold=score_threshold)


def train_from_dataset(
    dataset: Dataset, score_threshold: float = DEFAULT_SCORE_THRESHOLD
) -> TemplateDetector:
    """Same as train_baseline but reading an exported dataset directory."""
    templates: list[Template] = []
    seen: set[tuple] = set()
    for record in dataset.records:
        if record.get("source") != KEYFRAME:
            continue
        image = dataset.image(record)
        for box_json in record.get("boxes", []):
            try:
                box = BoundingBox(
                    x_min=int(box_json["x_min"]),
                    y_min=int(box_json["y_min"]),
                    x_max=int(box_json["x_max"]),
                    y_max=int(box_json["y_max"]),
                )
                label = str(box_json["label"])
            except (KeyError, TypeError, ValueError) as exc:
                raise TrainError(f"bad box record in dataset: {exc}") from exc
            pixels = to_grayscale(crop(image, box))
            if pixels.size == 0 or float(pixels.std()) < 1e-6:
                raise TrainError(f"unusable crop for class {label!r}")
            key = (label, pixels.shape, pixels.tobytes())
            if key in seen:
                continue
            seen.add(key)
            templates.append(Template(class_name=label, pixels=pixels))
    if not templates:
        raise TrainError("dataset contains no keyframe-sourced boxes")
    return TemplateDetector(templates=templates, score_threshold=score_threshold)


def save_detector(detector: TemplateDetector, path: Union[str, Path]) -> None:
    root = Path(path)
    (root / "templates").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, template in enumerate(detector.templates):
        # .npy keeps the grayscale values exact; a PNG would quantize them
        # and shift correlation scores between save and load.
        name = f"templates/{i:03d}.npy"
        np.save(root / name, np.asarray(template.pixels, dtype=np.float64))
        entries.append({"class_name": template.class_name, "file": name})
    meta = {
        "format_version": DETECTOR_FORMAT_VERSION,
        "score_threshold": detector.score_threshold,
        "templates": entries,
    }
    (root / DETECTOR_META_NAME).write_text(json.dumps(meta, indent=2) + "\n")


def load_detector(path: Union[str, Path]) -> TemplateDetector:
    root = Path(path)
    meta_path = root / DETECTOR_META_NAME
    if not meta_path.is_file():
        raise LoadError(f"{root} has no {DETECTOR_META_NAME}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(f"bad detector metadata: {exc}") from exc
    if meta.get("format_version") != DETECTOR_FORMAT_VERSION:
        raise LoadError(f"unsupported detector format_version {meta.get('format_version')!r}")
    templates = []
    for entry in meta.get("templates", []):
        file_path = root / entry.get("file", "")
        if not file_path.is_file():
            raise LoadError(f"detector template missing: {entry.get('file')!r}")
        try:
            pixels = np.load(file_path)
        except (OSError, ValueError) as exc:
            raise LoadError(f"bad detector template {entry.get('file')!r}: {exc}") from exc
        if pixels.ndim != 2:
            raise LoadError(f"detector template {entry.get('file')!r} is not 2-d")
        templates.append(Template(class_name=str(entry["class_name"]), pixels=pixels))
    if not templates:
        raise LoadError("detector has no templates")
    return TemplateDetector(
        templates=templates,
        score_threshold=float(meta.get("score_threshold", DEFAULT_SCORE_THRESHOLD)),
    )
