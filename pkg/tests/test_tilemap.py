import numpy as np
import pytest
from scipy import ndimage

from aerovpr.errors import MetadataError
from aerovpr.geo import GeoPoint, _merc_x, _merc_y
from aerovpr.imgio import load_image, save_image
from aerovpr.synth import SynthConfig, generate_map
from aerovpr.tilemap import (
    TileRecord,
    TileSet,
    build_tiles,
    ingest_raw_map,
    lattice_positions,
    load_raw_canvas,
    load_tileset,
    write_tileset,
)


@pytest.fixture(scope="module")
def raw3(tmp_path_factory):
    d = tmp_path_factory.mktemp("raw3")
    meta = generate_map(SynthConfig(seed=1, rows=3, cols=3, tile_px=64), d)
    return meta, ingest_raw_map(meta)


@pytest.fixture(scope="module")
def raw4(tmp_path_factory):
    d = tmp_path_factory.mktemp("raw4")
    meta = generate_map(SynthConfig(seed=2, rows=4, cols=4, tile_px=64), d)
    return meta, ingest_raw_map(meta)


def formula_count(extent, span, stride):
    # Closed-form lattice count; independent of the library's enumeration.
    if span > extent + 1e-9:
        return 0
    return int(np.floor((extent - span) / stride + 1e-9)) + 1


def tile_rect(t):
    return (_merc_x(t.nw.lon), _merc_y(t.nw.lat), _merc_x(t.se.lon), _merc_y(t.se.lat))


class TestIngest:
    def test_valid_grid(self, raw3):
        _, raw = raw3
        assert raw.rows == 3 and raw.cols == 3 and raw.tile_px == 64

    def test_missing_cell_named(self, raw3, tmp_path):
        meta, _ = raw3
        lines = meta.read_text().splitlines()
        # drop the row for grid cell (1, 2): row-major tile_id 1*3+2 = 5
        kept = [l for l in lines if not l.startswith("5,")]
        broken = tmp_path / "metadata.csv"
        broken.write_text("\n".join(kept) + "\n")
        for rec in meta.parent.iterdir():
            if rec.suffix == ".png":
                (tmp_path / rec.name).write_bytes(rec.read_bytes())
        with pytest.raises(MetadataError, match=r"\(1, 2\)"):
            ingest_raw_map(broken)

    def test_resolution_mismatch(self, raw3, tmp_path):
        meta, _ = raw3
        for rec in meta.parent.iterdir():
            (tmp_path / rec.name).write_bytes(rec.read_bytes())
        save_image(tmp_path / "tile_00004.png", np.zeros((32, 32), dtype=np.uint8))
        with pytest.raises(MetadataError, match="resolution mismatch"):
            ingest_raw_map(tmp_path / "metadata.csv")

    def test_malformed_line_named(self, tmp_path, raw3):
        meta, _ = raw3
        lines = meta.read_text().splitlines()
        lines[2] = lines[2].replace(",", ";", 1)
        bad = tmp_path / "metadata.csv"
        bad.write_text("\n".join(lines) + "\n")
        with pytest.raises(MetadataError, match="line 3"):
            ingest_raw_map(bad)


class TestBuildTiles:
    def test_identity_construction(self, raw3):
        meta, raw = raw3
        ts = build_tiles(raw, 100, 0)
        assert len(ts) == 9
        raw_records = load_tileset(meta).tiles
        for got, want in zip(ts.tiles, raw_records):
            assert got.nw.lat == pytest.approx(want.nw.lat, abs=1e-8)
            assert got.nw.lon == pytest.approx(want.nw.lon, abs=1e-8)
            assert got.se.lat == pytest.approx(want.se.lat, abs=1e-8)
            assert got.se.lon == pytest.approx(want.se.lon, abs=1e-8)

    def test_zoom50_halves_grid(self, raw4):
        _, raw = raw4
        ts = build_tiles(raw, 50, 0)
        assert len(ts) == 4
        rows = {t.row for t in ts.tiles}
        cols = {t.col for t in ts.tiles}
        assert rows == {0, 1} and cols == {0, 1}

    def test_overlap50_on_3x3(self, raw3):
        _, raw = raw3
        ts = build_tiles(raw, 100, 50)
        assert len(ts) == 25

    def test_map_too_small(self, raw3):
        _, raw = raw3
        with pytest.raises(MetadataError, match="too small"):
            build_tiles(raw, 10, 0)  # span 10 raw tiles > 3

    def test_counts_match_formula_and_enumeration(self, raw4):
        _, raw = raw4
        for zoom in (50, 100, 150, 200, 250):
            for overlap in (0, 25, 50):
                span = 100.0 / zoom
                stride = span * (1 - overlap / 100.0)
                per_axis = formula_count(4.0, span, stride)
                ts = build_tiles(raw, zoom, overlap, out_resolution=32)
                assert len(ts) == per_axis * per_axis, (zoom, overlap)
                assert len(lattice_positions(4.0, span, stride)) == per_axis

    def test_partition_at_zoom100_overlap0(self, raw4):
        _, raw = raw4
        ts = build_tiles(raw, 100, 0, out_resolution=32)
        b = raw.geo_bounds
        rects = [tile_rect(t) for t in ts.tiles]
        assert min(r[0] for r in rects) == pytest.approx(b.west, abs=1e-15)
        assert min(r[1] for r in rects) == pytest.approx(b.north, abs=1e-15)
        assert max(r[2] for r in rects) == pytest.approx(b.east, abs=1e-15)
        assert max(r[3] for r in rects) == pytest.approx(b.south, abs=1e-15)
        # pairwise interiors disjoint and union area equals map area
        area = sum((r[2] - r[0]) * (r[3] - r[1]) for r in rects)
        assert area == pytest.approx((b.east - b.west) * (b.south - b.north), rel=1e-12)
        for i, r1 in enumerate(rects):
            for r2 in rects[i + 1 :]:
                ox = min(r1[2], r2[2]) - max(r1[0], r2[0])
                oy = min(r1[3], r2[3]) - max(r1[1], r2[1])
                assert ox <= 1e-15 or oy <= 1e-15

    def test_every_tile_contains_its_own_center(self, raw4):
        from aerovpr.geo import PixelPoint, pixel_to_geo, point_in_tile

        _, raw = raw4
        for zoom, overlap in ((100, 0), (100, 50), (50, 25)):
            ts = build_tiles(raw, zoom, overlap, out_resolution=32)
            for t in ts.tiles:
                center = pixel_to_geo(t, PixelPoint(16, 16), 32, 32)
                assert point_in_tile(t, center)

    def test_consecutive_tiles_share_overlap_fraction(self, raw4):
        _, raw = raw4
        for overlap in (25, 50):
            ts = build_tiles(raw, 100, overlap, out_resolution=32)
            per_row = {}
            for t in ts.tiles:
                per_row.setdefault(t.row, []).append(t)
            for tiles in per_row.values():
                tiles.sort(key=lambda t: t.col)
                for a, b in zip(tiles, tiles[1:]):
                    ra, rb = tile_rect(a), tile_rect(b)
                    width = ra[2] - ra[0]
                    shared = ra[2] - rb[0]
                    assert shared / width == pytest.approx(
                        overlap / 100.0, rel=1e-9
                    )

    def test_pixel_content_matches_independent_resample(self, raw4):
        _, raw = raw4
        canvas = load_raw_canvas(raw)
        for zoom, overlap, out in ((100, 0, 64), (50, 25, 96), (200, 50, 48)):
            ts = build_tiles(raw, zoom, overlap, out_resolution=out)
            span_px = 100.0 / zoom * raw.tile_px
            stride_px = span_px * (1 - overlap / 100.0)
            for t in (ts.tiles[0], ts.tiles[len(ts) // 2], ts.tiles[-1]):
                x_lo = t.col * stride_px
                y_lo = t.row * stride_px
                grid = (np.arange(out) + 0.5) * (span_px / out)
                xs = np.add.outer(np.zeros(out), grid + x_lo) - 0.5
                ys = np.add.outer(grid + y_lo, np.zeros(out)) - 0.5
                oracle = ndimage.map_coordinates(
                    canvas, [ys, xs], order=1, mode="nearest"
                )
                got = ts.images[t.tile_id].astype(np.float64)
                assert np.abs(got - np.clip(np.rint(oracle), 0, 255)).max() <= 1.0


class TestTilesetIo:
    def test_round_trip(self, raw3, tmp_path):
        _, raw = raw3
        ts = build_tiles(raw, 100, 25, out_resolution=48)
        meta = write_tileset(ts, tmp_path / "db")
        again = load_tileset(meta)
        assert again.zoom_percent == 100 and again.overlap_percent == 25
        assert again.out_resolution == 48
        assert len(again) == len(ts)
        for got, want in zip(again.tiles, ts.tiles):
            assert got.tile_id == want.tile_id
            assert got.image_ref == want.image_ref
            assert got.row == want.row and got.col == want.col
            assert got.nw.lat == pytest.approx(want.nw.lat, abs=1e-9)
            assert got.nw.lon == pytest.approx(want.nw.lon, abs=1e-9)
            assert got.se.lat == pytest.approx(want.se.lat, abs=1e-9)
            assert got.se.lon == pytest.approx(want.se.lon, abs=1e-9)

    def test_write_idempotent(self, raw3, tmp_path):
        _, raw = raw3
        ts = build_tiles(raw, 100, 0, out_resolution=32)
        m1 = write_tileset(ts, tmp_path / "a")
        m2 = write_tileset(ts, tmp_path / "b")
        assert m1.read_bytes() == m2.read_bytes()
        img = ts.tiles[0].image_ref
        assert (tmp_path / "a" / img).read_bytes() == (tmp_path / "b" / img).read_bytes()

    def test_missing_image_named(self, raw3, tmp_path):
        _, raw = raw3
        ts = build_tiles(raw, 100, 0, out_resolution=32)
        meta = write_tileset(ts, tmp_path / "db")
        (tmp_path / "db" / ts.tiles[4].image_ref).unlink()
        with pytest.raises(MetadataError, match="tile 4"):
            load_tileset(meta)

    def test_swapped_corners_rejected(self, raw3, tmp_path):
        _, raw = raw3
        ts = build_tiles(raw, 100, 0, out_resolution=32)
        meta = write_tileset(ts, tmp_path / "db")
        lines = meta.read_text().splitlines()
        parts = lines[1].split(",")
        parts[2], parts[4] = parts[4], parts[2]  # nw_lat <-> se_lat
        lines[1] = ",".join(parts)
        meta.write_text("\n".join(lines) + "\n")
        with pytest.raises(MetadataError, match="north-west"):
            load_tileset(meta)

    def test_loaded_image_matches_written(self, raw3, tmp_path):
        _, raw = raw3
        ts = build_tiles(raw, 100, 0, out_resolution=32)
        meta = write_tileset(ts, tmp_path / "db")
        img = load_image(meta.parent / ts.tiles[3].image_ref)
        assert np.array_equal(img, ts.images[3])
