from typing import Optional


class SimulationError(Exception):
    """Base class for every error raised by the mast flow study."""


class InvalidGeometryError(SimulationError, ValueError):
    pass


class UnknownDesignError(SimulationError, ValueError):
    pass


class GeometryOutsideDomainError(SimulationError, ValueError):
    pass


class GeometryResolutionError(SimulationError, ValueError):
    pass


class ConfigError(SimulationError, ValueError):
    """Invalid configuration; `path` is the JSON path of the offending value."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class EmptyRunError(SimulationError, ValueError):
    pass


class InsufficientDataError(SimulationError, ValueError):
    pass


class SamplingError(SimulationError, ValueError):
    pass


class NormalizationError(SimulationError, ValueError):
    pass


class DivisionDomainError(SimulationError, ValueError):
    pass


class ExtrapolationError(SimulationError, ValueError):
    pass


class CampaignError(SimulationError):
    pass


class NumericalError(SimulationError):
    """Failures of the time integration itself (CLI exit code 2)."""


class DegenerateTimestepError(NumericalError):
    pass


class NumericalBlowupError(NumericalError):
    def __init__(self, message: str, step: Optional[int] = None,
                 time: Optional[float] = None, max_velocity: Optional[float] = None):
        self.step = step
        self.time = time
        self.max_velocity = max_velocity
        super().__init__(message)


class PoissonDivergenceError(NumericalError):
    def __init__(self, message: str, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
