"""Exception types shared across the package."""


class SynfocusError(Exception):
    """Base class for all package-specific errors."""


class BehindCamera(SynfocusError):
    """A world point lies at or behind the camera plane (depth <= 0)."""


class NoVisiblePoints(SynfocusError):
    """Every sample point failed to project in at least one of the poses."""


class DegenerateView(SynfocusError):
    """The camera/plane configuration admits no usable plane-to-image mapping."""


class InsufficientPixels(SynfocusError):
    """Fewer than two valid pixels are available for a variance estimate."""


class GridMismatch(SynfocusError):
    """A raster does not match the grid it is being combined with."""


class NonFiniteObjective(SynfocusError):
    """The objective returned a non-finite value at the starting point."""


class ConfigError(SynfocusError):
    """A configuration file failed to parse or validate."""


class TooFewImages(SynfocusError):
    """Fewer than two usable images were supplied for integration."""
