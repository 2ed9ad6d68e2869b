"""Exception types raised across the package."""


class IBLabError(Exception):
    """Base class for package errors."""


class SmoothActivation(IBLabError, ValueError):
    """Exact piecewise-linear analysis requested for a smooth activation."""


class MultivariateDependence(IBLabError, ValueError):
    """Network depends on more than one input coordinate where one is required."""


class StochasticLayer(IBLabError, ValueError):
    """A noisy layer was found where a deterministic map is required."""


class SupportOutsideDomain(IBLabError, ValueError):
    """Measure support is not contained in a function's domain."""


class UnboundedSupport(IBLabError, ValueError):
    pass


class NonDifferentiable(IBLabError, ValueError):
    """Gradient requested through a step activation."""


class InfiniteCost(IBLabError, ArithmeticError):
    """A cost evaluated to the Infinite value at a finite-difference probe."""


class Diverged(IBLabError, ArithmeticError):
    pass


class NonProbabilisticOutput(IBLabError, ValueError):
    """Network output is not a probability vector."""


class AbsoluteContinuityViolation(IBLabError, ValueError):
    """q vanishes where p is positive."""


class ScenarioFormatError(IBLabError, ValueError):
    """Malformed scenario or network file; carries the 1-based line number."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
