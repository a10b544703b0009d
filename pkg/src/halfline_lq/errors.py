"""Exception hierarchy shared by all modules."""


class HalflineLQError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(HalflineLQError, ValueError):
    """Invalid or out-of-range configuration parameter."""


class NumericError(HalflineLQError, ArithmeticError):
    """A numerical construction or factorization failed."""


class SolverError(NumericError):
    """An iterative or time-stepping solver did not converge or went unstable."""


class SimulationError(NumericError):
    """A simulated trajectory became non-finite."""
