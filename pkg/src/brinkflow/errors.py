"""Exception types shared across the package."""


class BrinkflowError(Exception):
    """Base class for all package-specific errors."""


class UnresolvedHole(BrinkflowError):
    """A hole is too small for the grid spacing (radius < 2h).

    Callers must refine the grid or abandon the run; silently keeping
    under-resolved holes produces wrong drag.
    """

    def __init__(self, radius, h, message=None):
        self.radius = radius
        self.h = h
        if message is None:
            message = (
                f"hole radius {radius:.6g} is below the resolvable limit "
                f"2h = {2 * h:.6g}; refine the grid or drop the hole"
            )
        super().__init__(message)


class NonConvergence(BrinkflowError):
    """An iterative solve stalled before reaching its tolerance."""

    def __init__(self, iterations, residual, message=None):
        self.iterations = iterations
        self.residual = residual
        if message is None:
            message = (
                f"solver stalled after {iterations} iterations "
                f"(residual {residual:.3e})"
            )
        super().__init__(message)


class ExtrapolationUnstable(BrinkflowError):
    """Successive capacity-over-scale values disagree too much to extrapolate."""


class CFLViolation(BrinkflowError):
    """A transport step was requested with dt above the CFL limit."""


class ConfigError(BrinkflowError):
    """An experiment configuration violates its invariants."""
