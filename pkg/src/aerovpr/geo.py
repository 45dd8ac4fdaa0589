"""Web Mercator projection, tile-local pixel mapping, and geodesic distance.

All functions are pure; values are immutable. Mercator coordinates grow
east (x) and south (y), with (0, 0) at the north-west corner of the world
square. Internally a unit world (world_size = 1) is used wherever only
ratios matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import GeoDomainError

EARTH_RADIUS_M = 6_371_000.0

# Latitude band where the square Web Mercator world is defined,
# i.e. atan(sinh(pi)) rounded; outside it projection is a hard error.
MERCATOR_LAT_LIMIT = 85.05113


@dataclass(frozen=True)
class GeoPoint:
    """Latitude/longitude in degrees; lon is normalized to [-180, 180)."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise GeoDomainError(f"latitude {self.lat} outside [-90, 90]")
        if math.isnan(self.lon):
            raise GeoDomainError("longitude is NaN")
        lon = (self.lon + 180.0) % 360.0 - 180.0
        if lon >= 180.0:  # float modulo can land exactly on the open edge
            lon -= 360.0
        object.__setattr__(self, "lon", lon)


@dataclass(frozen=True)
class MercatorPoint:
    """Position in Mercator pixels for some world size."""

    x: float
    y: float


@dataclass(frozen=True)
class PixelPoint:
    """Image position: u grows rightward, v downward, origin top-left."""

    u: float
    v: float


def _merc_x(lon: float) -> float:
    """Unit-world Mercator x of a longitude, no validation."""
    return lon / 360.0 + 0.5


def _merc_y(lat: float) -> float:
    """Unit-world Mercator y of a latitude, no validation."""
    phi = math.radians(lat)
    t = math.tan(math.pi / 4.0 + phi / 2.0)
    if t <= 0.0:  # float rounding at the south pole
        return math.inf
    return 0.5 - math.log(t) / (2.0 * math.pi)


def mercator_from_geo(p: GeoPoint, world_size: float) -> MercatorPoint:
    """Project a GeoPoint onto a square Mercator world of ``world_size`` pixels.

    x = world_size * (lon/360 + 1/2)
    y = world_size * (1/2 - ln(tan(pi/4 + phi/2)) / (2*pi))
    """
    if abs(p.lat) > MERCATOR_LAT_LIMIT:
        raise GeoDomainError(
            f"latitude {p.lat} outside Mercator band +-{MERCATOR_LAT_LIMIT}"
        )
    return MercatorPoint(world_size * _merc_x(p.lon), world_size * _merc_y(p.lat))


def geo_from_mercator(m: MercatorPoint, world_size: float) -> GeoPoint:
    """Invert :func:`mercator_from_geo`; input must lie inside the world square."""
    if not (0.0 <= m.x <= world_size and 0.0 <= m.y <= world_size):
        raise GeoDomainError(
            f"mercator point ({m.x}, {m.y}) outside [0, {world_size}]^2"
        )
    return _geo_from_unit(m.x / world_size, m.y / world_size)


def _geo_from_unit(ux: float, uy: float) -> GeoPoint:
    """Unit-world inverse projection, tolerant of out-of-square inputs."""
    lon = (ux - 0.5) * 360.0
    t = math.pi * (1.0 - 2.0 * uy)
    lat = math.degrees(math.atan(math.sinh(t)))
    return GeoPoint(lat, lon)


def geodesic_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine distance in meters on a sphere of radius 6,371,000 m."""
    la1 = math.radians(a.lat)
    la2 = math.radians(b.lat)
    dlat = la2 - la1
    dlon = math.radians(b.lon - a.lon)
    h = (
        math.sin(dlat / 2.0) ** 2
        + math.cos(la1) * math.cos(la2) * math.sin(dlon / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _tile_unit_rect(tile) -> tuple[float, float, float, float]:
    """(west_x, north_y, east_x, south_y) of a tile in the unit Mercator world."""
    return (
        _merc_x(tile.nw.lon),
        _merc_y(tile.nw.lat),
        _merc_x(tile.se.lon),
        _merc_y(tile.se.lat),
    )


def pixel_to_geo(tile, px: PixelPoint, width: float, height: float) -> GeoPoint:
    """Map an image position inside a tile to geographic coordinates.

    ``px`` is expressed in the tile's image resolution (``width`` x ``height``);
    (0, 0) is the NW corner and (width, height) the SE corner. Positions
    outside the image extrapolate linearly in Mercator space.
    """
    wx, ny, ex, sy = _tile_unit_rect(tile)
    if ex - wx <= 0.0 or sy - ny <= 0.0 or width <= 0 or height <= 0:
        raise GeoDomainError("tile rectangle or image size has zero area")
    ux = wx + (px.u / width) * (ex - wx)
    uy = ny + (px.v / height) * (sy - ny)
    return _geo_from_unit(ux, uy)


def point_in_tile(tile, p: GeoPoint) -> bool:
    """True iff ``p`` lies inside the tile's Mercator rectangle, edges inclusive."""
    wx, ny, ex, sy = _tile_unit_rect(tile)
    ux = _merc_x(p.lon)
    uy = _merc_y(p.lat)
    return wx <= ux <= ex and ny <= uy <= sy
