"""Dataset preparation on top of labeled frames.

Covers the chores between labeling and detector training: dropping
near-duplicate frames, augmenting labeled samples, mining negative
crops, and exporting everything to a directory layout that a training
job (or this package's baseline detector) can consume.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from PIL import Image

from .errors import ExportError, InputError, LoadError
from .geometry import BoundingBox, intersection_area
from .imaging import save_image, to_grayscale
from .labeling import KEYFRAME, PROPAGATED, AnnotationSet

logger = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
ANNOTATIONS_NAME = "annotations.jsonl"
IMAGES_DIR = "images"
NEGATIVES_DIR = "negatives"

AUGMENT_OPS = ("hflip", "rotate90", "color_jitter", "distort")


# -- near-duplicate removal ----------------------------------------------


@dataclass(frozen=True)
class DedupConfig:
    downsample: int = 64
    threshold: float = 4.0  # mean abs gray difference on the 0..255 scale


def _thumbnail(image: np.ndarray, side: int) -> np.ndarray:
    gray = to_grayscale(image)
    img = Image.fromarray(np.clip(gray, 0, 255).astype(np.uint8))
    return np.asarray(img.resize((side, side), Image.BILINEAR), dtype=np.float64)


def dedupe_frames(
    frames: Sequence[np.ndarray], config: DedupConfig | None = None
) -> list[int]:
    """Indices of frames to keep, comparing each frame to the last kept one.

    Consecutive frames of a paused video differ only by sensor noise;
    comparing small grayscale thumbnails makes the test cheap and
    insensitive to that noise while real motion still registers.
    """
    config = config or DedupConfig()
    if config.downsample < 1:
        raise InputError(f"downsample must be >= 1, got {config.downsample}")
    kept: list[int] = []
    last = None
    for index, frame in enumerate(frames):
        thumb = _thumbnail(frame, config.downsample)
        if last is None or np.abs(thumb - last).mean() >= config.threshold:
            kept.append(index)
            last = thumb
    return kept


# -- augmentation --------------------------------------------------------


@dataclass(frozen=True)
class AugmentedSample:
    op: str  # "identity" or one of AUGMENT_OPS
    image: np.ndarray
    boxes: tuple[BoundingBox, ...]


def _hflip(image: np.ndarray, boxes, rng) -> tuple[np.ndarray, list[BoundingBox]]:
    width = image.shape[1]
    flipped = [
        replace(b, x_min=width - b.x_max, x_max=width - b.x_min) for b in boxes
    ]
    return np.ascontiguousarray(np.fliplr(image)), flipped


def _rotate90(image: np.ndarray, boxes, rng) -> tuple[np.ndarray, list[BoundingBox]]:
    # np.rot90 is counterclockwise: pixel (x, y) lands at (y, W-1-x).
    width = image.shape[1]
    rotated = [
        replace(b, x_min=b.y_min, y_min=width - b.x_max, x_max=b.y_max, y_max=width - b.x_min)
        for b in boxes
    ]
    return np.ascontiguousarray(np.rot90(image)), rotated


def _color_jitter(image: np.ndarray, boxes, rng) -> tuple[np.ndarray, list[BoundingBox]]:
    gains = rng.uniform(0.8, 1.2, size=3)
    offset = rng.uniform(-20.0, 20.0)
    jittered = np.clip(image.astype(np.float64) * gains + offset, 0, 255).astype(np.uint8)
    return jittered, list(boxes)


def _distort(image: np.ndarray, boxes, rng) -> tuple[np.ndarray, list[BoundingBox]]:
    noise = rng.normal(0.0, 5.0, size=image.shape)
    noisy = np.clip(image.astype(np.float64) + noise, 0, 255).astype(np.uint8)
    return noisy, list(boxes)


_AUGMENT_FNS = {
    "hflip": _hflip,
    "rotate90": _rotate90,
    "color_jitter": _color_jitter,
    "distort": _distort,
}


def augment_sample(
    image: np.ndarray,
    boxes: Sequence[BoundingBox],
    ops: Sequence[str] = AUGMENT_OPS,
    seed: int = 0,
) -> list[AugmentedSample]:
    """The original sample plus one augmented copy per requested op.

    Stochastic ops draw from a generator seeded per call, so the same
    (image, seed) pair always produces identical outputs.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InputError("augmentation expects HxWx3 images")
    for op in ops:
        if op not in _AUGMENT_FNS:
            raise InputError(f"unknown augmentation op {op!r}; known: {sorted(_AUGMENT_FNS)}")
    rng = np.random.default_rng(seed)
    out = [AugmentedSample(op="identity", image=image, boxes=tuple(boxes))]
    for op in ops:
        new_image, new_boxes = _AUGMENT_FNS[op](image, boxes, rng)
        out.append(AugmentedSample(op=op, image=new_image, boxes=tuple(new_boxes)))
    return out


# -- negative mining -----------------------------------------------------


def mine_negatives(
    image: np.ndarray,
    positives: Sequence[BoundingBox],
    count: int,
    seed: int = 0,
    min_size: int = 16,
    max_size: Optional[int] = None,
    max_attempts: int = 200,
) -> list[BoundingBox]:
    """Sample background crops that share no pixel with any positive box.

    Rejection sampling with a per-crop attempt budget; a crowded image
    may yield fewer than ``count`` crops, which is reported rather than
    looped on forever.
    """
    image = np.asarray(image)
    height, width = image.shape[:2]
    if max_size is None:
        max_size = max(min_size, min(height, width) // 2)
    if min_size > min(height, width):
        raise InputError(
            f"min_size {min_size} exceeds image extent {width}x{height}"
        )
    max_size = min(max_size, min(height, width))
    rng = np.random.default_rng(seed)
    negatives: list[BoundingBox] = []
    for _ in range(count):
        found = None
        for _attempt in range(max_attempts):
            w = int(rng.integers(min_size, max_size + 1))
            h = int(rng.integers(min_size, max_size + 1))
            x = int(rng.integers(0, width - w + 1))
            y = int(rng.integers(0, height - h + 1))
            candidate = BoundingBox(x_min=x, y_min=y, x_max=x + w, y_max=y + h)
            if all(intersection_area(candidate, p) == 0 for p in positives):
                found = candidate
                break
        if found is None:
            logger.warning(
                "negative mining gave up after %d attempts; returning %d of %d crops",
                max_attempts,
                len(negatives),
                count,
            )
            break
        negatives.append(found)
    return negatives


# -- export / import -----------------------------------------------------


def crop(image: np.ndarray, box: BoundingBox) -> np.ndarray:
    return np.asarray(image)[box.y_min : box.y_max, box.x_min : box.x_max]


def _image_name(frame_index: int) -> str:
    return f"frame_{frame_index:06d}.png"


def export_dataset(
    frames: Sequence[np.ndarray],
    annotations: AnnotationSet,
    out_dir: Union[str, Path],
    classes: Optional[Sequence[str]] = None,
    negatives_per_frame: int = 0,
    seed: int = 0,
) -> dict:
    """Write labeled frames, JSONL annotations, mined negatives, and a
    manifest under ``out_dir``.  Returns the manifest.

    Requesting a class that has no labels is an export error: training on
    it would silently produce a detector that can never fire.
    """
    labeled_frames = sorted(
        {f for t in annotations.tracks.values() for f in t.keyframes}
        | {f for t in annotations.tracks.values() for f in t.propagated}
    )
    if not labeled_frames:
        raise ExportError("annotation set contains no labels to export")
    available = annotations.class_names()
    class_list = sorted(classes) if classes is not None else available
    missing = [c for c in class_list if c not in available]
    if missing:
        raise ExportError(f"no labels exist for requested classes: {missing}")

    out = Path(out_dir)
    (out / IMAGES_DIR).mkdir(parents=True, exist_ok=True)
    if negatives_per_frame > 0:
        (out / NEGATIVES_DIR).mkdir(parents=True, exist_ok=True)

    records = []
    negative_count = 0
    for frame_index in labeled_frames:
        if frame_index >= len(frames):
            raise ExportError(
                f"label on frame {frame_index} but video has {len(frames)} frames"
            )
        entries = [
            e for e in annotations.labels_at(frame_index) if e.class_name in class_list
        ]
        if not entries:
            continue
        image = np.asarray(frames[frame_index])
        image_ref = f"{IMAGES_DIR}/{_image_name(frame_index)}"
        save_image(image, out / image_ref)
        for source in (KEYFRAME, PROPAGATED):
            boxes = [
                {
                    "x_min": e.box.x_min,
                    "y_min": e.box.y_min,
                    "x_max": e.box.x_max,
                    "y_max": e.box.y_max,
                    "label": e.class_name,
                    "score": e.score,
                    "track_id": e.track_id,
                }
                for e in entries
                if e.source == source
            ]
            if boxes:
                records.append(
                    {
                        "image_ref": image_ref,
                        "frame_index": frame_index,
                        "source": source,
                        "boxes": boxes,
                    }
                )
        if negatives_per_frame > 0:
            mined = mine_negatives(
                image,
                [e.box for e in entries],
                negatives_per_frame,
                seed=seed + frame_index,
            )
            for i, box in enumerate(mined):
                save_image(
                    crop(image, box),
                    out / NEGATIVES_DIR / f"frame_{frame_index:06d}_{i:02d}.png",
                )
            negative_count += len(mined)

    with open(out / ANNOTATIONS_NAME, "w") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")

    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "video_ref": annotations.video_ref,
        "classes": class_list,
        "image_count": len({r["image_ref"] for r in records}),
        "record_count": len(records),
        "negative_count": negative_count,
        "images_dir": IMAGES_DIR,
        "annotations_file": ANNOTATIONS_NAME,
        "negatives_dir": NEGATIVES_DIR if negative_count else None,
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


@dataclass
class Dataset:
    root: Path
    manifest: dict
    records: list[dict]

    def image(self, record: dict) -> np.ndarray:
        from .imaging import load_image

        return load_image(self.root / record["image_ref"])


def load_dataset(path: Union[str, Path]) -> Dataset:
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise LoadError(f"{root} has no {MANIFEST_NAME}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(f"bad dataset manifest: {exc}") from exc
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise LoadError(
            f"unsupported dataset format_version {manifest.get('format_version')!r}"
        )
    records = []
    annotations_path = root / manifest.get("annotations_file", ANNOTATIONS_NAME)
    if not annotations_path.is_file():
        raise LoadError(f"dataset missing annotations file {annotations_path.name}")
    for lineno, line in enumerate(annotations_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LoadError(f"annotations line {lineno}: {exc}") from exc
        if not (root / record.get("image_ref", "")).is_file():
            raise LoadError(
                f"annotations line {lineno}: missing image {record.get('image_ref')!r}"
            )
        records.append(record)
    return Dataset(root=root, manifest=manifest, records=records)
