"""Lossless 8-bit raster I/O (PNG) shared by tilemap, synth, and extractors."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG as uint8, shape (h, w) for grayscale or (h, w, 3) for RGB."""
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
        return np.asarray(im, dtype=np.uint8)


def save_image(path: str | Path, data: np.ndarray) -> None:
    """Write a uint8 array to PNG; 2D saves as grayscale, (h, w, 3) as RGB."""
    if data.dtype != np.uint8:
        raise ValueError("image data must be uint8")
    mode = "L" if data.ndim == 2 else "RGB"
    Image.fromarray(data, mode=mode).save(path, format="PNG")


def image_size(path: str | Path) -> tuple[int, int]:
    """(width, height) from the file header without decoding pixels."""
    with Image.open(path) as im:
        return im.size
