"""Tile databases: raw-grid ingestion and zoom/overlap lattice construction.

A raw map is a complete zero-overlap grid of equally sized square tiles
whose corner coordinates are known. Constructed tiles are cut from that
grid on a sliding lattice: a tile spans ``100 / zoom_percent`` raw tiles
per axis and consecutive lattice positions are ``span * (1 - overlap/100)``
apart. Lattice positions whose span would leave the map are dropped.

Metadata lives in a CSV with one header line and one row per tile:
``tile_id,path,nw_lat,nw_lon,se_lat,se_lon,zoom_percent,overlap_percent,row,col``
(latitudes/longitudes with 10 decimal places). Raw maps use the same
schema with zoom 100 and overlap 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import GeoDomainError, MetadataError
from .geo import GeoPoint, _geo_from_unit, _merc_x, _merc_y
from .imgio import image_size, load_image, save_image

CSV_HEADER = [
    "tile_id",
    "path",
    "nw_lat",
    "nw_lon",
    "se_lat",
    "se_lon",
    "zoom_percent",
    "overlap_percent",
    "row",
    "col",
]

# Slack for lattice fitting; spans and strides are ratios of small integers
# and accumulate harmless last-bit error.
_LATTICE_EPS = 1e-9


@dataclass(frozen=True)
class MercatorRect:
    """Axis-aligned rectangle in the unit Mercator world (y grows south)."""

    west: float
    north: float
    east: float
    south: float

    def __post_init__(self) -> None:
        if not (self.east > self.west and self.south > self.north):
            raise MetadataError("degenerate Mercator rectangle")


@dataclass(frozen=True)
class TileRecord:
    """One database tile with its geographic corner rectangle."""

    tile_id: int
    image_ref: str
    nw: GeoPoint
    se: GeoPoint
    zoom_percent: float
    overlap_percent: float
    row: int
    col: int

    def __post_init__(self) -> None:
        if not (
            _merc_x(self.nw.lon) < _merc_x(self.se.lon)
            and _merc_y(self.nw.lat) < _merc_y(self.se.lat)
        ):
            raise MetadataError(
                f"tile {self.tile_id}: nw corner must be north-west of se"
            )
        if self.zoom_percent <= 0:
            raise MetadataError(f"tile {self.tile_id}: zoom_percent must be > 0")
        if not 0 <= self.overlap_percent < 100:
            raise MetadataError(
                f"tile {self.tile_id}: overlap_percent must be in [0, 100)"
            )

    @property
    def ne(self) -> GeoPoint:
        return GeoPoint(self.nw.lat, self.se.lon)

    @property
    def sw(self) -> GeoPoint:
        return GeoPoint(self.se.lat, self.nw.lon)


@dataclass(frozen=True)
class TileSet:
    """Ordered tiles sharing one zoom/overlap/resolution configuration.

    ``images``, when present, holds the in-memory pixel data produced by
    :func:`build_tiles` (uint8 arrays aligned with ``tiles``); tilesets
    loaded from disk reference image files instead.
    """

    tiles: tuple[TileRecord, ...]
    zoom_percent: float
    overlap_percent: float
    out_resolution: int
    images: tuple[np.ndarray, ...] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        for i, t in enumerate(self.tiles):
            if t.tile_id != i:
                raise MetadataError(
                    f"tile_id {t.tile_id} at position {i}: ids must be dense 0..n-1"
                )
            if t.zoom_percent != self.zoom_percent or (
                t.overlap_percent != self.overlap_percent
            ):
                raise MetadataError(
                    f"tile {i}: zoom/overlap differs from the set's configuration"
                )

    def __len__(self) -> int:
        return len(self.tiles)


@dataclass(frozen=True)
class RawMap:
    """Zero-overlap source grid with uniform square tiles."""

    rows: int
    cols: int
    tile_px: int
    geo_bounds: MercatorRect
    tiles: tuple[tuple[str, ...], ...]  # [row][col] -> image path
    root: Path


def _parse_row(fields: list[str], lineno: int) -> TileRecord:
    if len(fields) != len(CSV_HEADER):
        raise MetadataError(
            f"line {lineno}: expected {len(CSV_HEADER)} fields, got {len(fields)}"
        )
    try:
        return TileRecord(
            tile_id=int(fields[0]),
            image_ref=fields[1],
            nw=GeoPoint(float(fields[2]), float(fields[3])),
            se=GeoPoint(float(fields[4]), float(fields[5])),
            zoom_percent=float(fields[6]),
            overlap_percent=float(fields[7]),
            row=int(fields[8]),
            col=int(fields[9]),
        )
    except (ValueError, GeoDomainError) as exc:
        raise MetadataError(f"line {lineno}: {exc}") from exc


def _read_metadata(metadata_path: str | Path) -> list[TileRecord]:
    path = Path(metadata_path)
    if not path.is_file():
        raise MetadataError(f"metadata file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MetadataError(f"{path}: empty metadata file") from None
        if header != CSV_HEADER:
            raise MetadataError(f"{path} line 1: bad header {header}")
        records = [_parse_row(row, lineno) for lineno, row in enumerate(reader, 2)]
    if not records:
        raise MetadataError(f"{path}: no tile rows")
    return records


def ingest_raw_map(metadata_path: str | Path) -> RawMap:
    """Load and validate a zero-overlap raw grid from its metadata CSV."""
    path = Path(metadata_path)
    records = _read_metadata(path)
    root = path.parent

    rows = max(r.row for r in records) + 1
    cols = max(r.col for r in records) + 1
    grid: dict[tuple[int, int], TileRecord] = {}
    for rec in records:
        if rec.zoom_percent != 100 or rec.overlap_percent != 0:
            raise MetadataError(
                f"tile {rec.tile_id}: raw maps must use zoom 100 / overlap 0"
            )
        key = (rec.row, rec.col)
        if key in grid:
            raise MetadataError(f"duplicate grid cell {key}")
        grid[key] = rec
    for r in range(rows):
        for c in range(cols):
            if (r, c) not in grid:
                raise MetadataError(f"missing grid cell ({r}, {c})")

    tile_px: int | None = None
    for rec in sorted(grid.values(), key=lambda t: t.tile_id):
        img_path = root / rec.image_ref
        if not img_path.is_file():
            raise MetadataError(f"tile {rec.tile_id}: image not found: {img_path}")
        w, h = image_size(img_path)
        if w != h:
            raise MetadataError(f"tile {rec.tile_id}: raw tiles must be square")
        if tile_px is None:
            tile_px = w
        elif w != tile_px:
            raise MetadataError(
                f"tile {rec.tile_id}: resolution mismatch ({w} px vs {tile_px} px)"
            )

    nw = grid[(0, 0)].nw
    se = grid[(rows - 1, cols - 1)].se
    bounds = MercatorRect(
        west=_merc_x(nw.lon),
        north=_merc_y(nw.lat),
        east=_merc_x(se.lon),
        south=_merc_y(se.lat),
    )
    paths = tuple(
        tuple(grid[(r, c)].image_ref for c in range(cols)) for r in range(rows)
    )
    return RawMap(
        rows=rows, cols=cols, tile_px=tile_px or 0, geo_bounds=bounds,
        tiles=paths, root=root,
    )


def lattice_positions(extent: float, span: float, stride: float) -> list[float]:
    """Start positions k*stride (k = 0, 1, ...) with the span kept on the map."""
    positions = []
    k = 0
    while k * stride + span <= extent + _LATTICE_EPS:
        positions.append(k * stride)
        k += 1
    return positions


def load_raw_canvas(raw: RawMap) -> np.ndarray:
    """Assemble the full raw-map pixel canvas, float64, row-major grid order."""
    t = raw.tile_px
    first = load_image(raw.root / raw.tiles[0][0])
    shape = (raw.rows * t, raw.cols * t) + first.shape[2:]
    canvas = np.empty(shape, dtype=np.float64)
    for r in range(raw.rows):
        for c in range(raw.cols):
            img = load_image(raw.root / raw.tiles[r][c])
            if img.shape != first.shape:
                raise MetadataError(
                    f"raw tile ({r}, {c}): shape {img.shape} != {first.shape}"
                )
            canvas[r * t : (r + 1) * t, c * t : (c + 1) * t] = img
    return canvas


def resample_region(
    canvas: np.ndarray, x_lo: float, y_lo: float, w: float, h: float, out: int
) -> np.ndarray:
    """Bilinear-resample canvas region [x_lo, x_lo+w] x [y_lo, y_lo+h] to out^2.

    Output pixel centers map to evenly spaced source positions in edge
    coordinates (pixel (i, j) center at x_lo + (j + 0.5) * w / out).
    """
    js = (np.arange(out, dtype=np.float64) + 0.5) * (w / out) + x_lo
    vs = (np.arange(out, dtype=np.float64) + 0.5) * (h / out) + y_lo
    xs = np.broadcast_to(js[None, :], (out, out)).ravel() - 0.5
    ys = np.broadcast_to(vs[:, None], (out, out)).ravel() - 0.5
    if canvas.ndim == 2:
        vals = kernels.bilinear_sample(np.ascontiguousarray(canvas), xs, ys)
        out_img = vals.reshape(out, out)
    else:
        chans = [
            kernels.bilinear_sample(np.ascontiguousarray(canvas[:, :, c]), xs, ys).reshape(out, out)
            for c in range(canvas.shape[2])
        ]
        out_img = np.stack(chans, axis=2)
    return np.clip(np.rint(out_img), 0, 255).astype(np.uint8)


def build_tiles(
    raw: RawMap,
    zoom_percent: float,
    overlap_percent: float,
    out_resolution: int | None = None,
) -> TileSet:
    """Construct the tile lattice for one zoom/overlap configuration.

    Tile span is ``100 / zoom_percent`` raw tiles per axis; the stride
    between lattice positions is ``span * (1 - overlap_percent / 100)``.
    Geographic corners interpolate the map bounds linearly in Mercator.
    """
    if zoom_percent <= 0:
        raise MetadataError("zoom_percent must be > 0")
    if not 0 <= overlap_percent < 100:
        raise MetadataError("overlap_percent must be in [0, 100)")
    out = out_resolution if out_resolution is not None else raw.tile_px

    span = 100.0 / zoom_percent
    stride = span * (1.0 - overlap_percent / 100.0)
    xs = lattice_positions(float(raw.cols), span, stride)
    ys = lattice_positions(float(raw.rows), span, stride)
    if not xs or not ys:
        raise MetadataError(
            f"map too small for zoom {zoom_percent}%: span {span} raw tiles "
            f"exceeds a {raw.rows}x{raw.cols} grid"
        )

    b = raw.geo_bounds
    canvas = load_raw_canvas(raw)
    t = raw.tile_px
    records: list[TileRecord] = []
    images: list[np.ndarray] = []
    for ri, py in enumerate(ys):
        for ci, px in enumerate(xs):
            tile_id = ri * len(xs) + ci
            fx0, fx1 = px / raw.cols, (px + span) / raw.cols
            fy0, fy1 = py / raw.rows, (py + span) / raw.rows
            nw = _geo_from_unit(
                b.west + fx0 * (b.east - b.west), b.north + fy0 * (b.south - b.north)
            )
            se = _geo_from_unit(
                b.west + fx1 * (b.east - b.west), b.north + fy1 * (b.south - b.north)
            )
            records.append(
                TileRecord(
                    tile_id=tile_id,
                    image_ref=f"tile_{tile_id:05d}.png",
                    nw=nw,
                    se=se,
                    zoom_percent=zoom_percent,
                    overlap_percent=overlap_percent,
                    row=ri,
                    col=ci,
                )
            )
            images.append(
                resample_region(canvas, px * t, py * t, span * t, span * t, out)
            )
    return TileSet(
        tiles=tuple(records),
        zoom_percent=zoom_percent,
        overlap_percent=overlap_percent,
        out_resolution=out,
        images=tuple(images),
    )


def _format_row(t: TileRecord) -> list[str]:
    return [
        str(t.tile_id),
        t.image_ref,
        f"{t.nw.lat:.10f}",
        f"{t.nw.lon:.10f}",
        f"{t.se.lat:.10f}",
        f"{t.se.lon:.10f}",
        f"{t.zoom_percent:g}",
        f"{t.overlap_percent:g}",
        str(t.row),
        str(t.col),
    ]


def write_tileset(ts: TileSet, out_dir: str | Path) -> Path:
    """Write metadata plus PNG tile images; returns the metadata path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if ts.images is not None:
        for rec, img in zip(ts.tiles, ts.images):
            save_image(out / rec.image_ref, img)
    metadata = out / "metadata.csv"
    with open(metadata, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in ts.tiles:
            writer.writerow(_format_row(rec))
    return metadata


def load_tileset(metadata_path: str | Path) -> TileSet:
    """Read tileset metadata back; verifies ids, uniformity, and image files."""
    path = Path(metadata_path)
    records = _read_metadata(path)
    records.sort(key=lambda r: r.tile_id)
    root = path.parent
    for rec in records:
        if not (root / rec.image_ref).is_file():
            raise MetadataError(f"tile {rec.tile_id}: missing image {rec.image_ref}")
    w, h = image_size(root / records[0].image_ref)
    if w != h:
        raise MetadataError("tile images must be square")
    return TileSet(
        tiles=tuple(records),
        zoom_percent=records[0].zoom_percent,
        overlap_percent=records[0].overlap_percent,
        out_resolution=w,
    )


def tile_image_path(metadata_path: str | Path, rec: TileRecord) -> Path:
    return Path(metadata_path).parent / rec.image_ref
