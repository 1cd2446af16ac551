"""Exception hierarchy.

Each family maps to one CLI exit code: configuration (2), geometry (3)
and numerics (4).
"""

from __future__ import annotations


class SurfhelError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(SurfhelError, ValueError):
    """Malformed input, unknown keys or invalid parameters."""

    exit_code = 2


class GeometryError(SurfhelError):
    """Degenerate surface, offset out of range or points too close to a surface."""

    exit_code = 3


class OffsetError(GeometryError):
    pass


class ProximityError(GeometryError):
    pass


class NumericsError(SurfhelError):
    """A numerical procedure could not produce a trustworthy answer."""

    exit_code = 4


class SolvabilityError(NumericsError):
    pass


class TopologyError(NumericsError):
    pass


class DecompositionError(NumericsError):
    pass


class DegeneratePeriodError(NumericsError):
    pass


class UndefinedTransformError(NumericsError):
    pass


class TracingError(NumericsError):
    pass


class TransversalityError(TracingError):
    pass


class SamplingError(NumericsError):
    pass


class KernelResolutionError(NumericsError):
    pass
