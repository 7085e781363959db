"""Exception types raised across the package."""

from __future__ import annotations


class HarnackError(Exception):
    """Base class for every error raised by harnackmc."""


class NonFinite(HarnackError, ArithmeticError):
    pass


class GuardExceeded(HarnackError):
    """A state left the ball of radius ``guard_radius``.

    ``time`` is the grid time at which the offending state was produced.
    """

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class SingularSigma(HarnackError, ArithmeticError):
    pass


class PTooSmall(HarnackError, ValueError):
    pass


class DeltaZero(HarnackError, ValueError):
    pass


class XiUnderflow(HarnackError):
    pass


class FNotAboveOne(HarnackError, ValueError):
    pass


class UnboundedTestFunction(HarnackError, ValueError):
    pass


class MonteCarloAbort(HarnackError):
    """Too many paths hit the explosion guard for the estimate to be trusted."""

    def __init__(self, message: str, guard_fraction: float):
        super().__init__(message)
        self.guard_fraction = guard_fraction
