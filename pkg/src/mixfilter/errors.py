"""Exception types raised by the filters, oracles and harness."""


class MixFilterError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MixFilterError, ValueError):
    """An argument lies outside the domain of the function."""


class ConvergenceError(MixFilterError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class DegenerateObservationError(MixFilterError, ValueError):
    """Every candidate component density vanishes at the observation."""


class InvalidLabelError(MixFilterError, ValueError):
    pass


class ModelShapeError(MixFilterError, ValueError):
    """The model does not have the structure an operation requires."""


class ZeroInformationError(MixFilterError, ArithmeticError):
    """The data carry no information about the mixing weight (f1 == f2)."""


class QuadratureError(MixFilterError, RuntimeError):
    pass


class MassError(MixFilterError, ArithmeticError):
    """A moment-matching equation produced a non-positive total mass."""

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details
