"""Global-descriptor database: exact top-N scan plus the AVLD binary format.

AVLD layout (little-endian): magic ``AVLD``, version u32 = 1, count u64,
dim u32, then count*dim float32 values row-major. Row index equals tile_id.

Databases are small enough at desk scale that every query is an exact full
scan; distances are squared L2 on L2-normalized vectors, which orders
identically to descending cosine similarity.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimensionMismatchError,
    StoreFormatError,
    TruncatedFileError,
    VersionMismatchError,
)

_MAGIC = b"AVLD"
_VERSION = 1
_HEADER = struct.Struct("<4sIQI")


@dataclass(frozen=True)
class GlobalDescriptor:
    """Fixed-dimension real vector summarizing one image."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("descriptor entries must be finite")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def _normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    safe = np.where(norms > 0.0, norms, 1.0)  # all-zero rows stay all-zero
    return m / safe[:, None]


@dataclass(frozen=True)
class DescriptorDatabase:
    """Row-major matrix of L2-normalized float32 descriptors; row i = tile_id i."""

    matrix: np.ndarray

    @property
    def count(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def build_database(descriptors: list) -> DescriptorDatabase:
    """Stack descriptors in input order, L2-normalizing each row."""
    if not descriptors:
        raise ValueError("descriptor list must be nonempty")
    rows = []
    dim = None
    for i, d in enumerate(descriptors):
        v = d.values if isinstance(d, GlobalDescriptor) else np.asarray(d, np.float64)
        v = v.reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"row {i}: descriptor entries must be finite")
        if dim is None:
            dim = v.shape[0]
        elif v.shape[0] != dim:
            raise DimensionMismatchError(
                f"row {i}: dimension {v.shape[0]} != {dim}"
            )
        rows.append(v)
    matrix = _normalize_rows(np.stack(rows)).astype("<f4")
    return DescriptorDatabase(matrix=matrix)


def search(
    db: DescriptorDatabase, q, n: int
) -> list[tuple[int, float]]:
    """Exact top-``n`` scan: ascending squared L2, ties by ascending tile_id.

    The query is L2-normalized and quantized to float32 exactly like
    ingested rows, so a query equal to a stored row scores 0.0 exactly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    v = q.values if isinstance(q, GlobalDescriptor) else np.asarray(q, np.float64)
    v = v.reshape(-1)
    if v.shape[0] != db.dim:
        raise DimensionMismatchError(
            f"query dimension {v.shape[0]} != database dimension {db.dim}"
        )
    norm = float(np.sqrt(np.dot(v, v)))
    if norm > 0.0:
        v = v / norm
    qf = v.astype("<f4").astype(np.float64)
    diff = db.matrix.astype(np.float64) - qf[None, :]
    # np.sum's pairwise row reduction, not einsum: bit-identical to a
    # per-row full-scan oracle, so tie order is exactly reproducible.
    dists = np.sum(diff * diff, axis=1)
    order = np.argsort(dists, kind="stable")[: min(n, db.count)]
    return [(int(i), float(dists[i])) for i in order]


def save_database(db: DescriptorDatabase, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, db.count, db.dim))
        fh.write(np.ascontiguousarray(db.matrix, dtype="<f4").tobytes())


def load_database(path: str | Path) -> DescriptorDatabase:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise TruncatedFileError(f"{path}: shorter than the magic field")
    if data[:4] != _MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{path}: incomplete header")
    _, version, count, dim = _HEADER.unpack_from(data)
    if version != _VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {_VERSION}")
    if count < 1 or dim < 1:
        raise StoreFormatError(f"{path}: count and dim must be >= 1")
    want = count * dim * 4
    payload = data[_HEADER.size :]
    if len(payload) < want:
        raise TruncatedFileError(
            f"{path}: payload {len(payload)} bytes, expected {want}"
        )
    if len(payload) > want:
        raise StoreFormatError(f"{path}: {len(payload) - want} trailing bytes")
    matrix = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    return DescriptorDatabase(matrix=matrix.copy())
