"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
CapacityError -> 3, everything else -> 4.
"""


class GasketHydroError(Exception):
    """Base class for all package errors."""


class DomainError(GasketHydroError, ValueError):
    """An argument is outside the operation's domain (wrong level, non-corner
    vertex, negative time, mismatched sizes, ...)."""


class CapacityError(GasketHydroError):
    """A size cap was exceeded (graph level, dense eigensolver dimension,
    master-equation state space)."""


class SingularityError(GasketHydroError, ArithmeticError):
    """A linear problem is singular (e.g. the pure-Neumann corner system)."""


class InsufficientDataError(GasketHydroError):
    """Not enough samples/eigenvalues/replicas to produce an estimate."""


class ConfigError(GasketHydroError):
    """Experiment configuration is malformed or inconsistent."""
