"""Exception types shared across the package.

The CLI maps these onto stable exit codes: ShapeError -> 3,
EvaluationError -> 4, everything else -> 2.
"""


class PanomeshError(Exception):
    """Base class for all package errors."""


class TopologyError(PanomeshError):
    """Mesh connectivity is not a closed orientable 2-manifold."""


class ShapeError(PanomeshError):
    """Array shapes or resolutions are inconsistent."""


class DomainError(PanomeshError):
    """A value lies outside an operation's domain."""


class LevelError(PanomeshError):
    """A mesh-resolution level is unavailable or invalid."""


class ConfigError(PanomeshError):
    """Network or CLI configuration is invalid."""


class EvaluationError(PanomeshError):
    """Metric evaluation cannot proceed (no valid elements)."""


class GeometryError(PanomeshError):
    """Internal geometric invariant failed; signals a broken mesh."""
