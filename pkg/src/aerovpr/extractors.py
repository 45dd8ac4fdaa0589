"""Built-in classical extractors: grid global descriptor, Harris corners,
and normalized patch descriptors.

These are deterministic, parameter-fixed stand-ins for learned models so
that the full retrieval / re-ranking / alignment pipeline runs with no
external weights. Deep descriptors enter through the AVLD/AVLF import path
instead.

Pixel coordinates follow the tile convention: the image spans [0, w] x
[0, h] with the origin at the top-left corner, so the center of array cell
(row, col) is (col + 0.5, row + 0.5).
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .descstore import GlobalDescriptor
from .features import LocalFeatureSet

GRID_SIZE = 16  # global descriptor is GRID_SIZE^2-dimensional
HARRIS_K = 0.04
NMS_RADIUS = 1  # 3x3 non-maximum suppression
BORDER_PX = 8
PATCH = 16
PATCH_DOWN = 8
LUMA = (0.299, 0.587, 0.114)


def to_gray(img: np.ndarray) -> np.ndarray:
    """uint8 image (h, w) or (h, w, 3) to float64 grayscale via luma weights."""
    if img.ndim == 2:
        return img.astype(np.float64)
    r, g, b = LUMA
    return r * img[:, :, 0] + g * img[:, :, 1] + b * img[:, :, 2]


def _axis_weights(n: int, cells: int) -> np.ndarray:
    """(cells, n) exact area-average weights of pixels [r, r+1) in cell spans."""
    w = np.zeros((cells, n), dtype=np.float64)
    step = n / cells
    for i in range(cells):
        lo = i * step
        hi = (i + 1) * step
        r = np.arange(n, dtype=np.float64)
        w[i] = np.clip(np.minimum(hi, r + 1.0) - np.maximum(lo, r), 0.0, None)
    return w / step


def global_descriptor_grid(img: np.ndarray) -> GlobalDescriptor:
    """Mean-free, L2-normalized 16x16 area-average of the grayscale image."""
    if img.size == 0:
        raise ValueError("empty image")
    gray = to_gray(img)
    h, w = gray.shape
    cells = _axis_weights(h, GRID_SIZE) @ gray @ _axis_weights(w, GRID_SIZE).T
    flat = cells.ravel() - cells.mean()
    norm = float(np.sqrt(np.dot(flat, flat)))
    if norm > 0.0:
        flat = flat / norm
    else:
        flat = np.zeros(GRID_SIZE * GRID_SIZE)
    return GlobalDescriptor(values=flat)


def detect_corners(img: np.ndarray, max_k: int = 512) -> np.ndarray:
    """Strongest Harris corners as an (k, 3) array of (u, v, score).

    Deterministic ordering: descending response, then raster position.
    Responses within ``BORDER_PX`` of the image edge are discarded.
    """
    gray = to_gray(img)
    h, w = gray.shape
    if h < 16 or w < 16:
        raise ValueError(f"image {w}x{h} too small for corner detection")
    resp = kernels.harris_response(np.ascontiguousarray(gray), HARRIS_K)

    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = resp
    neighborhood = np.maximum.reduce(
        [
            padded[1 + dy : h + 1 + dy, 1 + dx : w + 1 + dx]
            for dy in (-1, 0, 1)
            for dx in (-1, 0, 1)
        ]
    )
    keep = (resp > 0.0) & (resp >= neighborhood)
    keep[:BORDER_PX] = False
    keep[h - BORDER_PX :] = False
    keep[:, :BORDER_PX] = False
    keep[:, w - BORDER_PX :] = False

    rows, cols = np.nonzero(keep)
    if rows.size == 0:
        return np.empty((0, 3), dtype=np.float64)
    scores = resp[rows, cols]
    order = np.lexsort((rows * w + cols, -scores))[:max_k]
    out = np.empty((order.size, 3), dtype=np.float64)
    out[:, 0] = cols[order] + 0.5
    out[:, 1] = rows[order] + 0.5
    out[:, 2] = scores[order]
    return out


def describe_patches(img: np.ndarray, keypoints: np.ndarray) -> LocalFeatureSet:
    """Mean-free, L2-normalized 8x8 downsample of the 16x16 patch at each point.

    Keypoints whose patch would leave the image are skipped; the returned
    set stays aligned with the surviving keypoints.
    """
    gray = to_gray(img)
    h, w = gray.shape
    half = PATCH // 2
    kept = []
    descs = []
    for kp in np.asarray(keypoints, dtype=np.float64).reshape(-1, 3):
        c = int(round(kp[0] - 0.5))
        r = int(round(kp[1] - 0.5))
        if r - half < 0 or r + half > h or c - half < 0 or c + half > w:
            continue
        patch = gray[r - half : r + half, c - half : c + half]
        small = patch.reshape(PATCH_DOWN, 2, PATCH_DOWN, 2).mean(axis=(1, 3))
        flat = small.ravel() - small.mean()
        norm = float(np.sqrt(np.dot(flat, flat)))
        descs.append(flat / norm if norm > 0.0 else np.zeros(flat.size))
        kept.append(kp)
    if not kept:
        return LocalFeatureSet(
            keypoints=np.empty((0, 3)),
            descriptors=np.empty((0, PATCH_DOWN * PATCH_DOWN)),
        )
    return LocalFeatureSet(keypoints=np.stack(kept), descriptors=np.stack(descs))


def extract_local(img: np.ndarray, max_k: int = 512) -> LocalFeatureSet:
    """Detect corners and describe them in one step."""
    return describe_patches(img, detect_corners(img, max_k))
