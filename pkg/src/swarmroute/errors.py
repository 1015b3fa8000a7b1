"""Exception types shared across the package."""


class SwarmRouteError(Exception):
    """Base class for all library errors."""


class ConfigError(SwarmRouteError):
    """Bad scenario/config input: parse failures, unknown keys, invalid values."""


class PfsaFormatError(SwarmRouteError):
    """Malformed automaton: broken invariants or unreadable serialization."""


class NumericalError(SwarmRouteError):
    """A numeric contract was violated (residuals, invariant checks)."""


class NonConvergenceError(SwarmRouteError):
    """An iterative procedure exhausted its budget before meeting tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
