"""Local-feature matching, inlier-count re-ranking, and the AVLF format.

Matching is mutual nearest neighbor under L2 with Lowe's ratio test applied
on both sides, which keeps the match relation symmetric. Re-ranking scores
each retrieval candidate by the RANSAC inlier count of the query-candidate
homography and is a drop-in stand-in for learned matchers: the criterion
(matched keypoints surviving geometric verification) is the same.

AVLF layout (little-endian), one file per image: magic ``AVLF``, version
u32 = 1, keypoint count u32, descriptor dim u32, then per-keypoint
(u f32, v f32, score f32), then the k x m float32 descriptor matrix
row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .alignment import Correspondence, RansacParams, ransac_homography
from .errors import (
    BadMagicError,
    DegenerateGeometryError,
    DimensionMismatchError,
    NoConsensusError,
    StoreFormatError,
    TruncatedFileError,
    VersionMismatchError,
)
from .geo import PixelPoint

_MAGIC = b"AVLF"
_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class LocalFeatureSet:
    """Keypoints (u, v, score) with row-aligned descriptors.

    Producers are expected to L2-normalize descriptor rows (all-zero rows
    allowed); the container itself only enforces shape alignment so that
    on-disk data round-trips bit-exactly.
    """

    keypoints: np.ndarray  # (k, 3) float64: u, v, score
    descriptors: np.ndarray  # (k, m) float64

    def __post_init__(self) -> None:
        kp = np.asarray(self.keypoints, dtype=np.float64).reshape(-1, 3)
        de = np.asarray(self.descriptors, dtype=np.float64)
        if de.ndim != 2:
            de = de.reshape(kp.shape[0], -1) if kp.shape[0] else de.reshape(0, 0)
        if kp.shape[0] != de.shape[0]:
            raise DimensionMismatchError(
                f"{kp.shape[0]} keypoints vs {de.shape[0]} descriptor rows"
            )
        object.__setattr__(self, "keypoints", kp)
        object.__setattr__(self, "descriptors", de)

    def __len__(self) -> int:
        return self.keypoints.shape[0]


@dataclass(frozen=True)
class MatchSet:
    """One-to-one index pairs (index_a, index_b, descriptor_distance)."""

    pairs: tuple[tuple[int, int, float], ...]

    def __len__(self) -> int:
        return len(self.pairs)


def match_features(a: LocalFeatureSet, b: LocalFeatureSet, ratio: float = 0.8) -> MatchSet:
    """Mutual nearest neighbors passing a two-sided ratio test.

    A pair survives iff each side is the other's nearest neighbor and the
    nearest/second-nearest distance ratio is strictly below ``ratio`` on
    both sides; the test is skipped against a single-feature set.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must be in (0, 1]")
    if len(a) == 0 or len(b) == 0:
        return MatchSet(pairs=())
    if a.descriptors.shape[1] != b.descriptors.shape[1]:
        raise DimensionMismatchError(
            f"descriptor dims differ: {a.descriptors.shape[1]} vs "
            f"{b.descriptors.shape[1]}"
        )
    d2 = kernels.pairwise_sqdist(
        np.ascontiguousarray(a.descriptors), np.ascontiguousarray(b.descriptors)
    )
    nn_b = np.argmin(d2, axis=1)
    nn_a = np.argmin(d2, axis=0)
    r2 = ratio * ratio

    ka, kb = d2.shape
    ok_a = np.ones(ka, dtype=bool)
    if kb >= 2:
        best = d2[np.arange(ka), nn_b]
        second = np.partition(d2, 1, axis=1)[:, 1]
        ok_a = best < r2 * second
    ok_b = np.ones(kb, dtype=bool)
    if ka >= 2:
        best = d2[nn_a, np.arange(kb)]
        second = np.partition(d2, 1, axis=0)[1, :]
        ok_b = best < r2 * second

    pairs = []
    for i in range(ka):
        j = nn_b[i]
        if nn_a[j] == i and ok_a[i] and ok_b[j]:
            pairs.append((int(i), int(j), float(np.sqrt(d2[i, j]))))
    return MatchSet(pairs=tuple(pairs))


def _derived_seed(base_seed: int, tile_id: int) -> int:
    # Stable per-candidate stream regardless of evaluation order.
    return int(np.random.SeedSequence([base_seed, tile_id]).generate_state(1)[0])


def verification_score(
    query: LocalFeatureSet,
    candidate: LocalFeatureSet,
    ratio: float,
    params: RansacParams,
    seed: int,
) -> int:
    """RANSAC inlier count between query and candidate; 0 when infeasible."""
    matches = match_features(query, candidate, ratio)
    if len(matches) < 4:
        return 0
    corrs = [
        Correspondence(
            PixelPoint(float(query.keypoints[i, 0]), float(query.keypoints[i, 1])),
            PixelPoint(
                float(candidate.keypoints[j, 0]), float(candidate.keypoints[j, 1])
            ),
        )
        for i, j, _ in matches.pairs
    ]
    try:
        _, inliers = ransac_homography(
            corrs, params.threshold_px, params.max_iters, seed
        )
    except (NoConsensusError, DegenerateGeometryError):
        return 0
    return len(inliers)


def rerank(
    query_feats: LocalFeatureSet,
    candidates: list[tuple[int, LocalFeatureSet]],
    initial_order: list[int],
    k: int,
    ransac_params: RansacParams = RansacParams(),
    ratio: float = 0.8,
) -> list[tuple[int, int]]:
    """Re-order retrieval candidates by geometric-verification inlier count.

    Ties keep the retrieval order, so uninformative geometry (all scores 0)
    degrades to the initial ranking rather than below it. Returns the first
    ``k`` of the re-ranked list as (tile_id, inlier_count).
    """
    if k < 1 or k > len(initial_order):
        raise ValueError(f"k must be in [1, {len(initial_order)}]")
    by_id = dict(candidates)
    missing = [t for t in initial_order if t not in by_id]
    if missing:
        raise ValueError(f"candidates missing for tile_ids {missing}")
    scored = []
    for pos, tile_id in enumerate(initial_order):
        score = verification_score(
            query_feats,
            by_id[tile_id],
            ratio,
            ransac_params,
            _derived_seed(ransac_params.seed, tile_id),
        )
        scored.append((-score, pos, tile_id))
    scored.sort()
    return [(tile_id, -neg) for neg, _, tile_id in scored[:k]]


def save_features(fs: LocalFeatureSet, path: str | Path) -> None:
    k = len(fs)
    dim = fs.descriptors.shape[1]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, k, dim))
        fh.write(np.ascontiguousarray(fs.keypoints, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(fs.descriptors, dtype="<f4").tobytes())


def load_features(path: str | Path) -> LocalFeatureSet:
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
    want = count * 12 + count * dim * 4
    payload = data[_HEADER.size :]
    if len(payload) < want:
        raise TruncatedFileError(
            f"{path}: payload {len(payload)} bytes, expected {want}"
        )
    if len(payload) > want:
        raise StoreFormatError(f"{path}: {len(payload) - want} trailing bytes")
    kp = np.frombuffer(payload[: count * 12], dtype="<f4").reshape(count, 3)
    de = np.frombuffer(payload[count * 12 :], dtype="<f4").reshape(count, dim)
    return LocalFeatureSet(
        keypoints=kp.astype(np.float64), descriptors=de.astype(np.float64)
    )
