class CorrelatorError(Exception):
    """Base class for every error raised by the simulator services"""


class ConfigError(CorrelatorError):
    """Experiment configuration is missing or invalid"""

    exit_code = 2


class InvariantViolation(CorrelatorError):
    """A numerical guard tripped after an internal computation"""

    exit_code = 3


class DimensionError(CorrelatorError, ValueError):
    pass


class NonHermitianError(CorrelatorError, ValueError):
    pass


class NormalizationError(CorrelatorError, ValueError):
    pass


class CircuitError(CorrelatorError, ValueError):
    pass


class MitigationError(CorrelatorError, ValueError):
    pass
