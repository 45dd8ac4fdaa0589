"""Adapters packing external descriptor/feature arrays into AVLD/AVLF files."""

from .formats import ExportError, ExportManifest, export_global, export_local
from .reader import FileReport, MalformedFile, inspect

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ExportManifest",
    "export_global",
    "export_local",
    "FileReport",
    "MalformedFile",
    "inspect",
    "__version__",
]
