"""Exception and warning types shared across the package."""


class SaddleGameError(Exception):
    """Base class for package errors."""


class InvalidGame(SaddleGameError):
    """Raised when a game fails well-formedness validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"invalid game: {lines}{more}")


class NotContractive(SaddleGameError):
    """Neither discounting nor absorption certifies convergence of value iteration."""


class MaxIterExceeded(RuntimeWarning):
    """Value iteration stopped at max_iter with the residual above tolerance."""


class MismatchedStateSpaces(SaddleGameError):
    """Two value functions are defined on different state spaces."""


class DegenerateDiffusion(SaddleGameError):
    """The covariance fails diagonal dominance at some sampled point."""


class HTooLarge(SaddleGameError):
    """The mesh size would produce negative transition probabilities."""

    def __init__(self, h, h_max):
        self.h = h
        self.h_max = h_max
        super().__init__(f"h={h!r} exceeds the nonnegativity bound h_max={h_max!r}")


class ConsistencyViolation(SaddleGameError):
    """A built chain fails a local-consistency moment check."""

    def __init__(self, moment, point, magnitude):
        self.moment = moment
        self.point = point
        self.magnitude = magnitude
        super().__init__(f"{moment} defect {magnitude!r} at {point}")


class UnreachableAbsorption(RuntimeWarning):
    """More than 1% of simulated paths were truncated before absorption."""
