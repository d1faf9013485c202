"""Exception hierarchy for fluidarray.

Plain ``ValueError`` is raised for malformed arguments (wrong shapes, out-of-range
scalars).  The classes below mark *domain* failure modes that callers may want to
catch and handle individually.
"""


class FluidArrayError(Exception):
    """Base class for domain-level errors."""


class UnsupportedSizeError(FluidArrayError):
    """Requested size falls outside a shipped table or supported range."""


class ResourceLimitError(FluidArrayError):
    """An exhaustive search was asked to exceed its combinatorial guard."""


class DegenerateConfigurationError(FluidArrayError):
    """Geometry/scenario combination yields a rank-deficient model."""


class UnidentifiableConfigurationError(FluidArrayError):
    """Fisher information is singular; the CRB does not exist."""


class InfeasibleSpacingError(FluidArrayError):
    """The minimum-spacing constraint cannot be met inside the aperture."""


class NoContiguousCoarrayError(FluidArrayError):
    """The difference coarray has no contiguous segment beyond lag zero."""


class TooManySourcesError(FluidArrayError):
    """More sources requested than the (virtual) array can resolve."""
