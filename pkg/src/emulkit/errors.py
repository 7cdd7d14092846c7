"""Exception types shared across the toolkit."""


class DimensionError(ValueError):
    """Shapes, channel layouts or lengths do not line up."""


class ConfigError(ValueError):
    """Invalid configuration (divisibility, modes, empty catalogs...)."""


class ContainerError(ValueError):
    """A container file could not be parsed or failed validation."""


class PlanError(ValueError):
    """A patch plan cannot be built for the requested extents."""


class InversionError(ValueError):
    """Jitter offset or plan does not match the field being inverted."""


class TrainingError(RuntimeError):
    pass


class RolloutError(RuntimeError):
    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step
