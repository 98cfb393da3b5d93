"""Exception types shared across the package."""


class ShapeError(ValueError):
    """A tensor argument has the wrong rank, size, or alignment."""


class ConfigError(ValueError):
    """A configuration value is missing, unknown, or out of range."""


class InputError(ValueError):
    """A runtime input (text, image, file) is malformed."""


class CheckpointError(RuntimeError):
    """A checkpoint file is unreadable, corrupt, or inconsistent."""
