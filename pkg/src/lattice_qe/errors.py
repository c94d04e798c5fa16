"""Exception hierarchy shared by the engines, scenarios and the CLI."""


class LatticeQEError(Exception):
    """Base class for all package errors."""


class ConfigError(LatticeQEError, ValueError):
    """Invalid physical or numerical parameters."""


class NumericalFailure(LatticeQEError, RuntimeError):
    """A quadrature, root search or integrator did not reach its tolerance.

    Attributes:
        achieved: Best error estimate reached before giving up (may be None).
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class DivergenceError(LatticeQEError, ValueError):
    """The requested quantity is infinite at this argument."""


class NormDriftError(NumericalFailure):
    """Propagation lost unitarity beyond the accepted tolerance."""


class TailWindowError(LatticeQEError, ValueError):
    """Samples handed to the tail fit are still in the exponential regime."""
