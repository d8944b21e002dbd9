"""Exceptions raised by the simulator core."""


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""


class ConfigurationError(SimulationError, ValueError):
    """Invalid network configuration, sweep or scheme selection."""


class DimensionMismatch(SimulationError, ValueError):
    """Matrix shapes do not agree with each other or with the configuration."""


class IllConditionedNoiseCovariance(SimulationError, ArithmeticError):
    """A noise covariance that must be positive definite failed to factor."""


class NoUsableEigenmode(SimulationError, ValueError):
    """Power loading asked to spend a positive budget on all-zero eigenmodes."""


class EmptySampleError(SimulationError, ValueError):
    """A statistic was requested over an empty sample."""


class OutputError(SimulationError, OSError):
    """Writing campaign outputs failed."""

    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class AlphaOutOfRange(SimulationError, ArithmeticError):
    """The relay trace ratio left [0, 1] by more than roundoff (K_tilde not PSD)."""
