"""Exception types shared across the package."""

from __future__ import annotations


class DopplerOdomError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(DopplerOdomError, ValueError):
    pass


class BranchAmbiguityError(DopplerOdomError, ValueError):
    """Rotation angle too close to pi for a unique logarithm."""


class DegeneratePointError(DopplerOdomError, ValueError):
    pass


class DegenerateGeometryError(DopplerOdomError):
    """Doppler design matrix cannot observe the translational velocity."""

    def __init__(self, rank: int, message: str | None = None):
        self.rank = rank
        super().__init__(message or f"degenerate LOS geometry (design rank {rank})")


class NoOverlapError(DopplerOdomError):
    """Correspondence search returned no valid pairs."""


class DegenerateDirectionError(DopplerOdomError):
    """Normal equations are too ill-conditioned even after damping."""

    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"normal equations ill-conditioned (cond={condition:.3e})")


class InsufficientOverlapError(DopplerOdomError):
    """Fewer than two trajectory timestamps could be associated."""


class UnsupportedFormatError(DopplerOdomError, ValueError):
    pass


class PlyParseError(DopplerOdomError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(DopplerOdomError, ValueError):
    pass


class SceneError(DopplerOdomError, ValueError):
    pass


class TrajectoryParseError(DopplerOdomError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
