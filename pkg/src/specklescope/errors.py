"""Exception types raised across the package.

Everything derives from SpeckleScopeError so callers can catch the whole
family at once; most types also subclass ValueError because they signal
bad arguments rather than runtime faults.
"""

from __future__ import annotations


class SpeckleScopeError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(SpeckleScopeError, ValueError):
    """Invalid source geometry (non-positive gaps, too few sources, ...)."""


class OrderError(SpeckleScopeError, ValueError):
    """Correlation order m outside the supported range for the operation."""


class MatrixSizeError(SpeckleScopeError, ValueError):
    """Permanent requested for a matrix past the configured size cap."""


class AliasingError(SpeckleScopeError, ValueError):
    """Requested sampling is too coarse for the spectral content."""


class GridCoverageError(SpeckleScopeError, ValueError):
    """Detector grid does not cover a required position."""


class DegeneratePixelError(SpeckleScopeError, ValueError):
    """A pixel involved in normalization has zero mean intensity."""


class FitError(SpeckleScopeError, RuntimeError):
    """Spectral fit failed (rank deficiency or non-convergence)."""


class EmptyEvidenceError(SpeckleScopeError, ValueError):
    """Reconstruction attempted with no Present frequencies."""


class BoundsError(SpeckleScopeError, ValueError):
    """Problem size exceeds the hard limits of the exhaustive oracle."""


class ConfigError(SpeckleScopeError, ValueError):
    """Config file could not be parsed or failed validation."""
