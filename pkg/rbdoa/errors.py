"""
Exception hierarchy for the estimation library.

Every error also derives from ValueError so callers catching the builtin keep working.
"""


class RbdoaError(ValueError):
    """Base class for all library errors."""


class ConfigurationError(RbdoaError):
    """Invalid configuration value or file."""


class GeometryError(RbdoaError):
    """Array geometry cannot support the requested beamspace (too few sensors for the mode order, or too small an aperture)."""


class DimensionError(RbdoaError):
    """Shape or length mismatch between inputs."""


class RealnessError(RbdoaError):
    """A complex value reached a stage of the real-beamspace path."""


class InfeasibleProblemError(RbdoaError):
    """The residual bound is below the distance from the data to the dictionary range."""


class NoPeaksError(RbdoaError):
    """The spatial spectrum carries no energy."""


class SolverError(RbdoaError):
    """The convex solver failed to produce a usable solution."""


class NoSuccessfulRunsError(RbdoaError):
    """Every Monte Carlo trial of a sweep cell failed."""
