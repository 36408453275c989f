"""Exception hierarchy shared across the package."""


class PendulumError(Exception):
    """Base class for all errors raised by :mod:`pivotpend`."""


class ValidationError(PendulumError, ValueError):
    """Inputs are well formed but violate a mathematical precondition."""


class AperiodicPivot(ValidationError):
    """The pivot law has no period dividing the requested segment length."""


class NumericalFailure(PendulumError):
    """A numerical procedure did not reach its stated goal."""


class IntegrationFailure(NumericalFailure):
    """Step size underflow or step budget exhausted.

    ``last_state`` holds the last accepted ``(t, y)`` pair so callers can
    report how far the integration got.
    """

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class BracketViolation(NumericalFailure):
    """Both ends of a shooting bracket escape through the same side."""


class NoConvergence(NumericalFailure):
    """Every Newton seed was exhausted without meeting the tolerance."""


class ConvergedOutsideU(NumericalFailure):
    """A fixed point was found but its orbit leaves the admissible set.

    The offending orbit is attached as ``orbit``.
    """

    def __init__(self, message, orbit=None):
        super().__init__(message)
        self.orbit = orbit


class FixedPointOnBoundary(NumericalFailure):
    """The displacement field (nearly) vanishes on the index contour."""


class NonConvergentRefinement(NumericalFailure):
    """Adaptive contour refinement exceeded its sample budget."""
