"""Exception hierarchy shared across the package."""


class AerovprError(Exception):
    """Base class for all errors raised by this package."""


class GeoDomainError(AerovprError):
    """Input outside the valid domain of a geographic operation."""


class MetadataError(AerovprError):
    """Malformed or inconsistent tileset / raw-map metadata."""


class StoreFormatError(AerovprError):
    """Base class for binary store parsing failures."""


class BadMagicError(StoreFormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(StoreFormatError):
    """File carries an unsupported format version."""


class TruncatedFileError(StoreFormatError):
    """File ends before the declared payload is complete."""


class DimensionMismatchError(AerovprError):
    """Vector dimensions disagree where uniformity is required."""


class DegenerateGeometryError(AerovprError):
    """Point configuration does not determine a unique homography."""


class NoConsensusError(AerovprError):
    """RANSAC found no model supported by at least four inliers."""


class AlignmentError(AerovprError):
    """Local alignment failed; callers score this as a miss, not a crash."""


class ConfigError(AerovprError):
    """Invalid run configuration (CLI exit code 2)."""
