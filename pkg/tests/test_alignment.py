import numpy as np
import pytest

from aerovpr import kernels
from aerovpr.alignment import (
    AlignmentParams,
    Correspondence,
    Homography,
    RansacParams,
    apply_homography,
    estimate_homography_dlt,
    localize,
    ransac_homography,
)
from aerovpr.errors import (
    AlignmentError,
    DegenerateGeometryError,
    GeoDomainError,
    NoConsensusError,
)
from aerovpr.extractors import extract_local
from aerovpr.geo import GeoPoint, PixelPoint, geodesic_distance, pixel_to_geo
from aerovpr.tilemap import TileRecord


def corrs_from_arrays(src, dst):
    return [
        Correspondence(PixelPoint(float(s[0]), float(s[1])), PixelPoint(float(d[0]), float(d[1])))
        for s, d in zip(src, dst)
    ]


def random_homography(rng):
    # Near-similarity transform with mild perspective; well conditioned on
    # the [0, 300]^2 test domain.
    h = np.eye(3)
    h[:2, :2] += rng.uniform(-0.15, 0.15, (2, 2))
    h[:2, 2] = rng.uniform(-40, 40, 2)
    h[2, :2] = rng.uniform(-1e-4, 1e-4, 2)
    return h


def project(h, pts):
    ph = np.hstack([pts, np.ones((pts.shape[0], 1))])
    q = (h @ ph.T).T
    return q[:, :2] / q[:, 2:3]


class TestDlt:
    def test_identity(self):
        pts = np.array([[0.0, 0.0], [100.0, 0.0], [100.0, 100.0], [0.0, 100.0]])
        h = estimate_homography_dlt(corrs_from_arrays(pts, pts))
        assert np.allclose(h.h, np.eye(3), atol=1e-9)

    def test_pure_translation(self):
        pts = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]])
        h = estimate_homography_dlt(corrs_from_arrays(pts, pts + [5.0, -3.0]))
        want = np.array([[1.0, 0.0, 5.0], [0.0, 1.0, -3.0], [0.0, 0.0, 1.0]])
        assert np.allclose(h.h, want, atol=1e-9)

    def test_three_collinear_rejected(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [5.0, 0.0]])
        with pytest.raises(DegenerateGeometryError):
            estimate_homography_dlt(corrs_from_arrays(pts, pts))

    def test_too_few_points(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(DegenerateGeometryError):
            estimate_homography_dlt(corrs_from_arrays(pts, pts))

    def test_exact_on_random_noise_free_homographies(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            h_true = random_homography(rng)
            n = int(rng.integers(4, 30))
            src = rng.uniform(0, 300, (n, 2))
            dst = project(h_true, src)
            h = estimate_homography_dlt(corrs_from_arrays(src, dst))
            residual = np.abs(project(h.h, src) - dst).max()
            assert residual < 1e-9

    def test_h22_normalized(self):
        h = Homography(np.array([[2.0, 0, 0], [0, 2.0, 0], [0, 0, 2.0]]))
        assert h.h[2, 2] == 1.0
        assert h.h[0, 0] == 1.0


class TestRansac:
    def test_outlier_free_consensus(self):
        rng = np.random.default_rng(31)
        h_true = random_homography(rng)
        src = rng.uniform(0, 300, (20, 2))
        dst = project(h_true, src)
        h, inliers = ransac_homography(corrs_from_arrays(src, dst), 2.0, 500, seed=5)
        assert inliers == list(range(20))
        assert np.allclose(h.h / h.h[2, 2], h_true / h_true[2, 2], atol=1e-6)

    def test_planted_inliers_under_30pct_outliers(self):
        rng = np.random.default_rng(32)
        h_true = random_homography(rng)
        src = rng.uniform(0, 300, (20, 2))
        dst = project(h_true, src)
        dst[14:] += rng.uniform(25, 60, (6, 2)) * rng.choice([-1, 1], (6, 2))
        h, inliers = ransac_homography(
            corrs_from_arrays(src, dst), 2.0, 1000, seed=99
        )
        assert inliers == list(range(14))
        probe = rng.uniform(0, 300, (50, 2))
        assert np.abs(project(h.h, probe) - project(h_true, probe)).max() < 1.0

    def test_three_correspondences_rejected(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(DegenerateGeometryError):
            ransac_homography(corrs_from_arrays(pts, pts))

    def test_bad_threshold_rejected(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        with pytest.raises(ValueError):
            ransac_homography(corrs_from_arrays(pts, pts), inlier_threshold_px=0.0)

    def test_no_consensus_when_all_samples_degenerate(self):
        # Fully collinear sources admit no homography: every 4-point draw
        # is degenerate, so no hypothesis ever reaches 4 inliers.
        rng = np.random.default_rng(33)
        t = rng.uniform(0, 100, 30)
        src = np.stack([t, 2.0 * t + 1.0], axis=1)
        dst = rng.uniform(0, 100, (30, 2))
        with pytest.raises(NoConsensusError):
            ransac_homography(corrs_from_arrays(src, dst), 2.0, 50, seed=1)

    def test_seeded_reproducibility(self):
        rng = np.random.default_rng(34)
        h_true = random_homography(rng)
        src = rng.uniform(0, 300, (25, 2))
        dst = project(h_true, src)
        dst[18:] += 40.0
        a = ransac_homography(corrs_from_arrays(src, dst), 2.0, 300, seed=7)
        b = ransac_homography(corrs_from_arrays(src, dst), 2.0, 300, seed=7)
        assert a[1] == b[1]
        assert a[0].h.tobytes() == b[0].h.tobytes()


class TestApplyHomography:
    def test_identity(self):
        p = apply_homography(Homography(np.eye(3)), PixelPoint(3.5, -2.0))
        assert (p.u, p.v) == (3.5, -2.0)

    def test_translation(self):
        h = Homography(np.array([[1.0, 0, 5.0], [0, 1.0, -3.0], [0, 0, 1.0]]))
        p = apply_homography(h, PixelPoint(10.0, 10.0))
        assert (p.u, p.v) == (15.0, 7.0)

    def test_point_at_infinity(self):
        h = Homography(np.array([[1.0, 0, 0], [0, 1.0, 0], [1.0, 0.0, -10.0]]))
        with pytest.raises(GeoDomainError):
            apply_homography(h, PixelPoint(10.0, 4.0))

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            m = random_homography(rng)
            h = Homography(m)
            hinv = Homography(np.linalg.inv(h.h))
            p = PixelPoint(*rng.uniform(0, 300, 2))
            q = apply_homography(hinv, apply_homography(h, p))
            assert abs(q.u - p.u) < 1e-6 and abs(q.v - p.v) < 1e-6


def textured_image(seed, size=256):
    canvas = kernels.noise_canvas_numpy(size, size, 0.0, 0.0, 32.0, 5, 0.55, 2.0, seed)
    return np.clip(np.rint(canvas * 255.0), 0, 255).astype(np.uint8)


def small_tile():
    return TileRecord(
        tile_id=0,
        image_ref="t.png",
        nw=GeoPoint(47.001, 8.0),
        se=GeoPoint(47.0, 8.0015),
        zoom_percent=100.0,
        overlap_percent=0.0,
        row=0,
        col=0,
    )


class TestLocalize:
    def test_query_equals_tile(self):
        img = textured_image(7)
        feats = extract_local(img)
        tile = small_tile()
        got = localize(feats, (256, 256), feats, tile, 256)
        center = pixel_to_geo(tile, PixelPoint(128, 128), 256, 256)
        assert geodesic_distance(got, center) < 1.0

    def test_result_inside_tile(self):
        from aerovpr.geo import point_in_tile

        img = textured_image(8)
        feats = extract_local(img)
        tile = small_tile()
        got = localize(feats, (256, 256), feats, tile, 256)
        assert point_in_tile(tile, got)

    def test_unrelated_noise_fails(self):
        rng = np.random.default_rng(9)
        a = rng.integers(0, 256, (256, 256), dtype=np.uint8)
        b = rng.integers(0, 256, (256, 256), dtype=np.uint8)
        fa = extract_local(a)
        fb = extract_local(b)
        with pytest.raises(AlignmentError):
            localize(fa, (256, 256), fb, small_tile(), 256,
                     AlignmentParams(ransac=RansacParams(max_iters=200)))
