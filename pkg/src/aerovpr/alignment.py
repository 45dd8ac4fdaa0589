"""Robust homography estimation and query-to-map local alignment.

The estimator is the normalized Direct Linear Transform: both point sets
are Hartley-normalized (centroid at the origin, mean distance sqrt(2)),
the stacked 2n x 9 system is solved by the smallest right singular vector,
and the result is denormalized. RANSAC draws seeded 4-point samples,
scores hypotheses by one-directional reprojection error, and re-fits on
the best inlier set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    AlignmentError,
    DegenerateGeometryError,
    GeoDomainError,
    NoConsensusError,
)
from .geo import GeoPoint, PixelPoint, pixel_to_geo

# Relative floor under which the second-smallest singular value of the DLT
# system marks an ambiguous (degenerate) solution.
_DEGENERACY_RTOL = 1e-9


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform; h[2][2] is normalized to 1 when nonzero."""

    h: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.h, dtype=np.float64).reshape(3, 3)
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        object.__setattr__(self, "h", m)


@dataclass(frozen=True)
class Correspondence:
    src: PixelPoint
    dst: PixelPoint


@dataclass(frozen=True)
class RansacParams:
    threshold_px: float = 3.0
    max_iters: int = 2000
    seed: int = 12345


@dataclass(frozen=True)
class AlignmentParams:
    ratio: float = 0.8
    ransac: RansacParams = field(default_factory=RansacParams)


def _to_arrays(corrs) -> tuple[np.ndarray, np.ndarray]:
    src = np.array([[c.src.u, c.src.v] for c in corrs], dtype=np.float64)
    dst = np.array([[c.dst.u, c.dst.v] for c in corrs], dtype=np.float64)
    return src.reshape(-1, 2), dst.reshape(-1, 2)


def _hartley(pts: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if d <= 1e-12:
        raise DegenerateGeometryError("coincident points")
    s = math.sqrt(2.0) / d
    return (pts - c) * s, s, c


def _dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    n = src.shape[0]
    sn, ss, sc = _hartley(src)
    dn, ds, dc = _hartley(dst)
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    one = np.ones(n)
    zero = np.zeros(n)
    a = np.empty((2 * n, 9), dtype=np.float64)
    a[0::2] = np.stack([x, y, one, zero, zero, zero, -u * x, -u * y, -u], axis=1)
    a[1::2] = np.stack([zero, zero, zero, -x, -y, -one, v * x, v * y, v], axis=1)
    _, s_vals, vt = np.linalg.svd(a)
    # Degeneracy check at index 7: for n = 4 the system is 8x9 and the
    # solution lives in the implicit nullspace (no singular value of its
    # own), so the smallest of the 8 values must stay away from zero; for
    # n >= 5 index 7 is the second-smallest of 9.
    if s_vals[7] <= _DEGENERACY_RTOL * s_vals[0]:
        raise DegenerateGeometryError(
            "point configuration does not determine a unique homography"
        )
    hn = vt[-1].reshape(3, 3)
    t_src = np.array([[ss, 0.0, -ss * sc[0]], [0.0, ss, -ss * sc[1]], [0.0, 0.0, 1.0]])
    t_dst_inv = np.array(
        [[1.0 / ds, 0.0, dc[0]], [0.0, 1.0 / ds, dc[1]], [0.0, 0.0, 1.0]]
    )
    return t_dst_inv @ hn @ t_src


def estimate_homography_dlt(corrs) -> Homography:
    """Fit a homography to >= 4 correspondences by normalized DLT."""
    if len(corrs) < 4:
        raise DegenerateGeometryError(
            f"need at least 4 correspondences, got {len(corrs)}"
        )
    src, dst = _to_arrays(corrs)
    return Homography(_dlt(src, dst))


def ransac_homography(
    corrs,
    inlier_threshold_px: float = 3.0,
    max_iters: int = 2000,
    seed: int = 12345,
) -> tuple[Homography, list[int]]:
    """Seeded RANSAC over 4-point DLT hypotheses.

    Keeps the largest strict-inlier set (first found on ties), then
    re-estimates on that set. Raises :class:`NoConsensusError` when no
    hypothesis reaches four inliers.
    """
    if len(corrs) < 4:
        raise DegenerateGeometryError(
            f"need at least 4 correspondences, got {len(corrs)}"
        )
    if inlier_threshold_px <= 0:
        raise ValueError("inlier threshold must be > 0")
    src, dst = _to_arrays(corrs)
    n = src.shape[0]
    rng = np.random.default_rng(seed)
    samples = np.empty((max_iters, 4), dtype=np.int64)
    for i in range(max_iters):
        samples[i] = rng.choice(n, size=4, replace=False)
    count, mask = kernels.ransac_scan(src, dst, samples, float(inlier_threshold_px))
    if count < 4:
        raise NoConsensusError(
            f"no homography with >= 4 inliers in {max_iters} iterations"
        )
    inliers = np.flatnonzero(mask)
    return Homography(_dlt(src[inliers], dst[inliers])), [int(i) for i in inliers]


def apply_homography(h: Homography, p: PixelPoint) -> PixelPoint:
    """Project a pixel through the homography; rejects points at infinity."""
    m = h.h
    w = m[2, 0] * p.u + m[2, 1] * p.v + m[2, 2]
    if abs(w) < 1e-12:
        raise GeoDomainError(f"point ({p.u}, {p.v}) maps to infinity")
    return PixelPoint(
        (m[0, 0] * p.u + m[0, 1] * p.v + m[0, 2]) / w,
        (m[1, 0] * p.u + m[1, 1] * p.v + m[1, 2]) / w,
    )


def _wh(size) -> tuple[float, float]:
    if isinstance(size, (int, float)):
        return float(size), float(size)
    w, h = size
    return float(w), float(h)


def localize(
    query_feats,
    query_size,
    tile_feats,
    tile,
    tile_size,
    params: AlignmentParams = AlignmentParams(),
) -> GeoPoint:
    """Map the query-image center onto the tile and into geographic space.

    Pipeline: ratio-test mutual matching, RANSAC homography, projection of
    the query center (w/2, h/2), Mercator interpolation inside the tile.
    Raises :class:`AlignmentError` on failure; evaluation scores that as a
    miss rather than crashing.
    """
    from .features import match_features  # late import; features layers above

    matches = match_features(query_feats, tile_feats, params.ratio)
    if len(matches.pairs) < 4:
        raise AlignmentError(f"alignment failed: {len(matches.pairs)} matches")
    qk = query_feats.keypoints
    tk = tile_feats.keypoints
    corrs = [
        Correspondence(
            PixelPoint(float(qk[i, 0]), float(qk[i, 1])),
            PixelPoint(float(tk[j, 0]), float(tk[j, 1])),
        )
        for i, j, _ in matches.pairs
    ]
    try:
        h, _ = ransac_homography(
            corrs, params.ransac.threshold_px, params.ransac.max_iters,
            params.ransac.seed,
        )
        qw, qh = _wh(query_size)
        center_on_tile = apply_homography(h, PixelPoint(qw / 2.0, qh / 2.0))
    except (NoConsensusError, DegenerateGeometryError, GeoDomainError) as exc:
        raise AlignmentError(f"alignment failed: {exc}") from exc
    tw, th = _wh(tile_size)
    return pixel_to_geo(tile, center_on_tile, tw, th)
