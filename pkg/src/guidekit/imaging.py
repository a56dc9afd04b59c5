"""Small image IO and conversion helpers shared by the labeling,
matching, and dataset modules."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image

from .errors import InputError, LoadError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def load_image(path: Union[str, Path]) -> np.ndarray:
    """Load an image as an HxWx3 uint8 RGB array."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise LoadError(f"cannot load image {path}: {exc}") from exc


def save_image(array: np.ndarray, path: Union[str, Path]) -> None:
    array = np.asarray(array)
    if array.dtype != np.uint8:
        array = np.clip(np.round(array), 0, 255).astype(np.uint8)
    Image.fromarray(array).save(path)


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Luma grayscale as float64; 2-d inputs pass through as float."""
    image = np.asarray(image)
    if image.ndim == 2:
        return image.astype(np.float64)
    if image.ndim == 3 and image.shape[2] == 3:
        weights = np.array([0.299, 0.587, 0.114])
        return image.astype(np.float64) @ weights
    raise InputError(f"expected HxW or HxWx3 image, got shape {image.shape}")


class ImageDirFrames(Sequence):
    """Video stand-in: a directory of image files in sorted name order."""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise LoadError(f"{self.directory} is not a directory")
        self.paths = sorted(
            p for p in self.directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not self.paths:
            raise LoadError(f"no image files found under {self.directory}")

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [load_image(p) for p in self.paths[index]]
        return load_image(self.paths[index])
