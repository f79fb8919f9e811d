"""Image I/O in the [-1, 1] convention used throughout the pipeline."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import tifffile
from PIL import Image

IMAGE_SUFFIXES = (".png", ".tif", ".tiff")


def minmax_normalize(img: np.ndarray) -> np.ndarray:
    """Per-image min-max scaling to [-1, 1]; a constant image maps to all -1."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi <= lo:
        return np.full(img.shape, -1.0)
    return 2.0 * (img - lo) / (hi - lo) - 1.0


def read_raw(path) -> np.ndarray:
    path = Path(path)
    try:
        if path.suffix.lower() in (".tif", ".tiff"):
            arr = tifffile.imread(path)
        else:
            with Image.open(path) as im:
                arr = np.array(im)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected a single-channel image, got shape {arr.shape}")
    return arr


def load_image(path) -> np.ndarray:
    return minmax_normalize(read_raw(path)).astype(np.float32)


def load_mask(path) -> np.ndarray:
    """Load a stored mask without renormalizing: 8-bit 0/128/255 -> -1/~0/+1."""
    arr = read_raw(path).astype(np.float64)
    top = 65535.0 if arr.max() > 255 else 255.0
    return (2.0 * arr / top - 1.0).astype(np.float32)


def to_integer(tensor: np.ndarray, bit_depth: int = 8) -> np.ndarray:
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.size and (arr.min() < -1.0 or arr.max() > 1.0 or not np.all(np.isfinite(arr))):
        raise ValueError(f"values must lie in [-1, 1], got range [{arr.min()}, {arr.max()}]")
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    top = 2 ** bit_depth - 1
    return np.rint((arr + 1.0) / 2.0 * top).astype(np.uint8 if bit_depth == 8 else np.uint16)


def save_image(tensor: np.ndarray, path, bit_depth: int = 8):
    """Write a [-1, 1] tensor as an 8- or 16-bit grayscale PNG or TIFF."""
    data = to_integer(tensor, bit_depth)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() in (".tif", ".tiff"):
        tifffile.imwrite(path, data)
    else:
        Image.fromarray(data).save(path)


def save_labels(labels: np.ndarray, path):
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 65535:
        raise ValueError("label ids must fit in 16 bits")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(labels.astype(np.uint16)).save(path)


def load_labels(path) -> np.ndarray:
    return read_raw(path).astype(np.int32)


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
