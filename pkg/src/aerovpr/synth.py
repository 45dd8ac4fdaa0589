"""Deterministic synthetic raw maps and query sets with exact ground truth.

Terrain is integer-hashed multi-octave value noise rendered over one
continuous canvas and cut into raw tiles, so content is seamless across
tile boundaries and byte-identical across runs and platforms for a fixed
seed. Queries are similarity-perturbed windows of the same canvas; the
recorded ground truth is the geographic position of the window center.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError
from .geo import EARTH_RADIUS_M, GeoPoint, _geo_from_unit, _merc_x, _merc_y
from .imgio import save_image
from .tilemap import CSV_HEADER, RawMap, TileRecord, TileSet, load_raw_canvas, write_tileset

QUERY_CSV_HEADER = ["query_id", "path", "gt_lat", "gt_lon"]


@dataclass(frozen=True)
class Perturbation:
    """Similarity-transform and intensity noise applied to query windows."""

    max_rotation_deg: float = 0.0
    scale_min: float = 1.0
    scale_max: float = 1.0
    noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.scale_min <= self.scale_max:
            raise ConfigError("scale range must satisfy 0 < min <= max")
        if self.max_rotation_deg < 0 or self.noise_sigma < 0:
            raise ConfigError("rotation and noise sigma must be >= 0")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    rows: int = 4
    cols: int = 4
    tile_px: int = 256
    anchor: GeoPoint = field(default_factory=lambda: GeoPoint(47.0, 8.0))
    meters_per_raw_tile: float = 200.0
    query_count: int = 20
    perturbation: Perturbation = field(default_factory=Perturbation)
    # Terrain = contrast-stretched coarse value noise plus sharp dipole
    # landmarks. The coarse field (large base cell) gives pooled global
    # descriptors a position signal that survives window misalignment; the
    # mean-zero dipoles barely register after pooling but give corner
    # detection high-contrast anchors that survive intensity noise.
    noise_base_cell: float = 1024.0
    noise_octaves: int = 7
    noise_gain: float = 0.45
    noise_lacunarity: float = 2.0
    contrast_stretch: float = 1.8
    landmarks_per_tile: float = 120.0
    landmark_radius_min: float = 4.0
    landmark_radius_max: float = 9.0
    landmark_amp_min: float = 0.25
    landmark_amp_max: float = 0.4

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1 or self.tile_px < 16:
            raise ConfigError("map dimensions must be positive (tiles >= 16 px)")
        if self.meters_per_raw_tile <= 0:
            raise ConfigError("meters_per_raw_tile must be > 0")
        if self.query_count < 0:
            raise ConfigError("query_count must be >= 0")


def map_bounds(cfg: SynthConfig) -> tuple[float, float, float, float]:
    """Unit-Mercator (west, north, east, south) of the configured map."""
    dlat = math.degrees(cfg.rows * cfg.meters_per_raw_tile / EARTH_RADIUS_M)
    dlon = math.degrees(
        cfg.cols
        * cfg.meters_per_raw_tile
        / (EARTH_RADIUS_M * math.cos(math.radians(cfg.anchor.lat)))
    )
    se = GeoPoint(cfg.anchor.lat - dlat, cfg.anchor.lon + dlon)
    return (
        _merc_x(cfg.anchor.lon),
        _merc_y(cfg.anchor.lat),
        _merc_x(se.lon),
        _merc_y(se.lat),
    )


_HASH_MASK = (1 << 64) - 1


def _hash_u01(*vals: int) -> float:
    """Uniform [0, 1) from integer inputs; pure integer mixing, no RNG state."""
    n = 0x9E3779B97F4A7C15
    for v in vals:
        n = ((n ^ (int(v) & _HASH_MASK)) * 0xFF51AFD7ED558CCD) & _HASH_MASK
        n ^= n >> 33
        n = (n * 0xC4CEB9FE1A85EC53) & _HASH_MASK
        n ^= n >> 33
    return (n >> 11) / float(1 << 53)


def _landmark_field(cfg: SynthConfig, height: int, width: int) -> np.ndarray:
    """Sum of randomly placed dipole bumps (positive/negative half discs).

    Each dipole integrates to roughly zero, so pooled image statistics stay
    dominated by the coarse field, while the sign edge and rim provide
    strong, noise-stable gradients. Parameters come from integer hashing
    (seed, landmark index), so the field is reproducible bit for bit.
    """
    field = np.zeros((height, width))
    count = int(
        cfg.landmarks_per_tile * (height / cfg.tile_px) * (width / cfg.tile_px)
    )
    r_lo, r_hi = cfg.landmark_radius_min, cfg.landmark_radius_max
    a_lo, a_hi = cfg.landmark_amp_min, cfg.landmark_amp_max
    for i in range(count):
        cx = _hash_u01(cfg.seed, i, 1) * width
        cy = _hash_u01(cfg.seed, i, 2) * height
        radius = r_lo + _hash_u01(cfg.seed, i, 3) * (r_hi - r_lo)
        amp = a_lo + _hash_u01(cfg.seed, i, 4) * (a_hi - a_lo)
        # Unit split direction without trig: normalize a hashed 2-vector.
        dx = _hash_u01(cfg.seed, i, 5) - 0.5
        dy = _hash_u01(cfg.seed, i, 6) - 0.5
        norm = math.sqrt(dx * dx + dy * dy)
        if norm < 1e-9:
            dx, dy, norm = 1.0, 0.0, 1.0
        ux, uy = dx / norm, dy / norm
        x0 = max(0, int(cx - radius))
        x1 = min(width, int(cx + radius) + 1)
        y0 = max(0, int(cy - radius))
        y1 = min(height, int(cy + radius) + 1)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1, dtype=np.float64) + 0.5 - cx
        ys = np.arange(y0, y1, dtype=np.float64) + 0.5 - cy
        xx = np.broadcast_to(xs[None, :], (y1 - y0, x1 - x0))
        yy = np.broadcast_to(ys[:, None], (y1 - y0, x1 - x0))
        rim = np.sqrt(np.clip(1.0 - (xx * xx + yy * yy) / (radius * radius), 0.0, None))
        sign = np.where(xx * ux + yy * uy >= 0.0, 1.0, -1.0)
        field[y0:y1, x0:x1] += amp * rim * sign
    return field


def render_canvas(cfg: SynthConfig) -> np.ndarray:
    """Full-map uint8 terrain canvas (rows*tile_px x cols*tile_px)."""
    h = cfg.rows * cfg.tile_px
    w = cfg.cols * cfg.tile_px
    coarse = kernels.noise_canvas(
        h, w, 0.0, 0.0,
        cfg.noise_base_cell, cfg.noise_octaves, cfg.noise_gain,
        cfg.noise_lacunarity, cfg.seed,
    )
    mix = 0.5 + cfg.contrast_stretch * (coarse - 0.5) + _landmark_field(cfg, h, w)
    return np.clip(np.rint(np.clip(mix, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)


def generate_map(cfg: SynthConfig, out_dir: str | Path) -> Path:
    """Write raw tiles plus metadata CSV; returns the metadata path."""
    from .geo import mercator_from_geo

    mercator_from_geo(cfg.anchor, 1.0)  # validates the anchor's Mercator band
    west, north, east, south = map_bounds(cfg)
    canvas = render_canvas(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    t = cfg.tile_px
    records = []
    images = []
    for r in range(cfg.rows):
        for c in range(cfg.cols):
            tile_id = r * cfg.cols + c
            nw = _geo_from_unit(
                west + (c / cfg.cols) * (east - west),
                north + (r / cfg.rows) * (south - north),
            )
            se = _geo_from_unit(
                west + ((c + 1) / cfg.cols) * (east - west),
                north + ((r + 1) / cfg.rows) * (south - north),
            )
            records.append(
                TileRecord(
                    tile_id=tile_id,
                    image_ref=f"tile_{tile_id:05d}.png",
                    nw=nw,
                    se=se,
                    zoom_percent=100.0,
                    overlap_percent=0.0,
                    row=r,
                    col=c,
                )
            )
            images.append(canvas[r * t : (r + 1) * t, c * t : (c + 1) * t])
    ts = TileSet(
        tiles=tuple(records),
        zoom_percent=100.0,
        overlap_percent=0.0,
        out_resolution=t,
        images=tuple(images),
    )
    return write_tileset(ts, out)


def _query_margin(cfg: SynthConfig) -> float:
    """Half-extent of the largest rotated/scaled window footprint."""
    rot = math.radians(min(cfg.perturbation.max_rotation_deg, 45.0))
    factor = math.cos(rot) + math.sin(rot)
    return max(
        cfg.tile_px / 2.0,
        math.ceil(cfg.tile_px / 2.0 * cfg.perturbation.scale_max * factor) + 1.0,
    )


def render_query(
    canvas: np.ndarray,
    center_x: float,
    center_y: float,
    size: int,
    angle_deg: float,
    scale: float,
    noise_sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample one similarity-transformed window from the canvas."""
    half = size / 2.0
    offs = np.arange(size, dtype=np.float64) + 0.5 - half
    du = np.broadcast_to(offs[None, :], (size, size)).ravel()
    dv = np.broadcast_to(offs[:, None], (size, size)).ravel()
    cos_a = math.cos(math.radians(angle_deg))
    sin_a = math.sin(math.radians(angle_deg))
    xs = center_x + scale * (cos_a * du - sin_a * dv)
    ys = center_y + scale * (sin_a * du + cos_a * dv)
    vals = kernels.bilinear_sample(
        np.ascontiguousarray(canvas, dtype=np.float64), xs - 0.5, ys - 0.5
    ).reshape(size, size)
    if noise_sigma > 0.0:
        vals = vals + rng.normal(0.0, noise_sigma, vals.shape)
    return np.clip(np.rint(vals), 0, 255).astype(np.uint8)


def generate_queries(
    raw: RawMap, cfg: SynthConfig, out_dir: str | Path
) -> Path:
    """Write perturbed query windows plus the ground-truth CSV.

    Centers are uniform over the region at least one (transformed) half
    window away from every map edge; ground truth is the Mercator-correct
    geographic position of each window center.
    """
    canvas = load_raw_canvas(raw)
    h, w = canvas.shape[:2]
    t = cfg.tile_px
    margin = _query_margin(cfg)
    if 2 * margin >= min(h, w):
        raise ConfigError(
            f"query window ({t} px at scale <= {cfg.perturbation.scale_max}) "
            f"cannot fit inside a {w}x{h} px map"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    b = raw.geo_bounds

    rows = []
    for i in range(cfg.query_count):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x51, i]))
        cx = rng.uniform(margin, w - margin)
        cy = rng.uniform(margin, h - margin)
        p = cfg.perturbation
        angle = rng.uniform(-p.max_rotation_deg, p.max_rotation_deg)
        scale = rng.uniform(p.scale_min, p.scale_max)
        img = render_query(canvas, cx, cy, t, angle, scale, p.noise_sigma, rng)
        name = f"query_{i:05d}.png"
        save_image(out / name, img)
        gt = _geo_from_unit(
            b.west + (cx / w) * (b.east - b.west),
            b.north + (cy / h) * (b.south - b.north),
        )
        rows.append([str(i), name, f"{gt.lat:.10f}", f"{gt.lon:.10f}"])

    csv_path = out / "queries.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(QUERY_CSV_HEADER)
        writer.writerows(rows)
    return csv_path
