"""Exception types shared across the package."""


class ShapeError(ValueError):
    """An array argument does not match the shape a contract requires."""


class NonFiniteError(FloatingPointError):
    """A parameter, gradient, or loss became NaN/inf; the run must abort."""


class CheckpointError(ValueError):
    """A checkpoint file failed magic/version/shape validation."""


class ConfigError(ValueError):
    """An experiment configuration is invalid (unknown key, bad value, ...)."""
