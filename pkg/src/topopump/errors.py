"""Exception types shared across the package."""

__all__ = [
    "TopopumpError",
    "GeometryError",
    "GapClosureError",
    "GridError",
    "ConvergenceError",
    "PacketError",
    "ConfigError",
]


class TopopumpError(Exception):
    """Base class for numerical / physical errors raised by this package."""


class GeometryError(TopopumpError):
    """Invalid emitter geometry (coincident sites, broken cell structure)."""


class GapClosureError(TopopumpError):
    """A band gap closed (or fell below tolerance) where an open gap is required."""


class GridError(TopopumpError):
    """A discretization grid is too coarse or failed to stabilize."""


class ConvergenceError(TopopumpError):
    """An iterative computation or truncated sum did not converge."""


class PacketError(TopopumpError):
    """A wave packet cannot be represented faithfully on the given chain."""


class ConfigError(TopopumpError):
    """Invalid or inconsistent run configuration."""
