"""Exception types shared across the package."""


class GameError(Exception):
    """Base class for all domain errors raised by this package."""


class AssumptionViolation(GameError):
    """A standing model assumption fails at some grid point."""


class NonpositiveWeight(GameError):
    """A running weight (l1, l2, m1, m2) is not strictly positive."""


class SingularRatio(GameError):
    """An inverse gain ratio is required but its denominator can vanish."""


class OutOfRange(GameError):
    """A time argument lies outside the horizon [0, T]."""


class BlowUp(GameError):
    """An ODE solution exceeded the finite-value guard."""

    def __init__(self, system: str, t: float, value: float):
        self.system = system
        self.t = t
        self.value = value
        super().__init__(f"{system} exceeded guard at t={t:.6g} (value {value:.3e})")


class GridMismatch(GameError):
    """Array arguments do not share the expected grid shape."""


class PatternMismatch(GameError):
    """An operation was invoked for an information pattern it does not serve."""


class NotAdapted(GameError):
    """A perturbation direction is not admissible for every player."""


class SingularSystem(GameError):
    """The discrete first-order-condition system is rank deficient."""


class SingularMatrix(GameError):
    """A matrix that must be inverted is singular."""


class ParseError(GameError):
    """A scenario file could not be parsed."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")
