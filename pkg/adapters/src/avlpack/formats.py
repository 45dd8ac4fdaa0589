"""Writers for the AVLD and AVLF binary formats.

Both formats are little-endian regardless of host byte order.

AVLD: magic ``AVLD``, version u32 = 1, count u64, dim u32, then count*dim
float32 values row-major (row index = tile or query id).

AVLF (one file per image): magic ``AVLF``, version u32 = 1, keypoint count
u32, descriptor dim u32, then per-keypoint (u f32, v f32, score f32), then
the count x dim float32 descriptor matrix row-major.

The adapter knows nothing about the models that produced the arrays; it
validates shapes and finiteness and lays out bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

AVLD_MAGIC = b"AVLD"
AVLF_MAGIC = b"AVLF"
VERSION = 1
AVLD_HEADER = struct.Struct("<4sIQI")
AVLF_HEADER = struct.Struct("<4sIII")


class ExportError(ValueError):
    """Invalid manifest or array content."""


@dataclass(frozen=True)
class ExportManifest:
    """Ordered (id, vector) rows destined for one AVLD file."""

    entries: tuple[tuple[int, np.ndarray], ...]
    dim: int
    out_path: Path

    def __post_init__(self) -> None:
        if not self.entries:
            raise ExportError("empty manifest: count must be >= 1")
        if self.dim < 1:
            raise ExportError("dim must be >= 1")
        for pos, (ident, _) in enumerate(self.entries):
            if ident != pos:
                raise ExportError(
                    f"ids must be dense and ordered: position {pos} has id {ident}"
                )


def _check_vector(ident: int, arr: np.ndarray, dim: int) -> np.ndarray:
    v = np.asarray(arr, dtype=np.float64).reshape(-1)
    if v.shape[0] != dim:
        raise ExportError(f"id {ident}: dimension {v.shape[0]} != {dim}")
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.isfinite(v))[0])
        raise ExportError(f"id {ident}: non-finite value at component {bad}")
    return v


def export_global(manifest: ExportManifest) -> Path:
    """Write one AVLD file; row order equals manifest id order."""
    rows = [
        _check_vector(ident, arr, manifest.dim) for ident, arr in manifest.entries
    ]
    matrix = np.ascontiguousarray(np.stack(rows), dtype="<f4")
    out = Path(manifest.out_path)
    with open(out, "wb") as fh:
        fh.write(AVLD_HEADER.pack(AVLD_MAGIC, VERSION, len(rows), manifest.dim))
        fh.write(matrix.tobytes())
    return out


def export_local(
    ident: int,
    keypoints: np.ndarray,
    descriptors: np.ndarray,
    out_path: str | Path,
) -> Path:
    """Write one AVLF file for one image.

    ``keypoints`` is (k, 3) as (u, v, score); ``descriptors`` is (k, m).
    k = 0 is valid and produces an empty-but-wellformed file.
    """
    kps = np.asarray(keypoints, dtype=np.float64)
    des = np.asarray(descriptors, dtype=np.float64)
    if kps.ndim != 2 or kps.shape[1] != 3:
        raise ExportError(f"id {ident}: keypoints must be (k, 3), got {kps.shape}")
    if des.ndim != 2:
        raise ExportError(f"id {ident}: descriptors must be 2-D, got {des.shape}")
    if kps.shape[0] != des.shape[0]:
        raise ExportError(
            f"id {ident}: {kps.shape[0]} keypoints vs {des.shape[0]} descriptor rows"
        )
    if not np.all(np.isfinite(kps)):
        raise ExportError(f"id {ident}: non-finite keypoint entry")
    if des.size and not np.all(np.isfinite(des)):
        bad = int(np.flatnonzero(~np.isfinite(des).all(axis=1))[0])
        raise ExportError(f"id {ident}: non-finite descriptor at row {bad}")
    out = Path(out_path)
    with open(out, "wb") as fh:
        fh.write(
            AVLF_HEADER.pack(AVLF_MAGIC, VERSION, kps.shape[0], des.shape[1])
        )
        fh.write(np.ascontiguousarray(kps, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(des, dtype="<f4").tobytes())
    return out
