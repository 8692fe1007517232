"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class ShapeError(ValueError):
    """Array extents do not match what an operation expects."""


class EstimationError(RuntimeError):
    """Channel estimation cannot proceed with the given inputs."""


class NondeterminismError(RuntimeError):
    """A closure returned different values for identical inputs."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
