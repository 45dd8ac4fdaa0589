"""Evaluation harness for visual place recognition over aerial map tiles."""

from .geo import GeoPoint, MercatorPoint, PixelPoint

__version__ = "0.1.0"

__all__ = ["GeoPoint", "MercatorPoint", "PixelPoint", "__version__"]
