"""Thermodynamic-formalism computations for piecewise-monotone interval maps."""

import logging

from .errors import (BudgetError, ConfigError, ConvergenceError, DomainError, PreconditionError,
                     SingularityError, Thermo1dError)
from .maps import IntervalMap, make_builtin, make_intermittent, map_from_spec
from .potentials import Potential, birkhoff_sum, cohomology_reduce, make_potential

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"

__all__ = [
    "BudgetError", "ConfigError", "ConvergenceError", "DomainError", "PreconditionError",
    "SingularityError", "Thermo1dError", "IntervalMap", "make_builtin", "make_intermittent",
    "map_from_spec", "Potential", "birkhoff_sum", "cohomology_reduce", "make_potential",
]
