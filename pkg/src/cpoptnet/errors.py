"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes, lengths or ranks of the inputs do not agree."""


class NumericalError(ArithmeticError):
    """A solver produced a non-finite value or a singular system.

    ``trace`` carries the iterations completed before the failure, when
    there is one.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NonDescentDirection(ValueError):
    """Line search was given a direction along which the objective grows."""
