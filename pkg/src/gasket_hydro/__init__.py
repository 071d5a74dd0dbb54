"""Boundary-driven exclusion process on Sierpinski gasket graphs.

Simulation engine, discrete calculus, boundary-conditioned spectra, heat
equation solvers, and Ornstein-Uhlenbeck fluctuation diagnostics on the
level-N gasket graphs.
"""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigError,
    DomainError,
    GasketHydroError,
    InsufficientDataError,
    SingularityError,
)
from .gasket import GasketGraph, build

__all__ = [
    "GasketGraph",
    "build",
    "GasketHydroError",
    "DomainError",
    "CapacityError",
    "SingularityError",
    "InsufficientDataError",
    "ConfigError",
    "__version__",
]
