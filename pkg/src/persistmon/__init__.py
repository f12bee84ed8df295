"""Persistent ocean monitoring with a sparse online Gaussian process.

A vehicle repeatedly plans informative waypoints on a coarse grid, routes
through them, samples the field along the way and keeps a bounded-memory
GP model whose kernel is re-learned when enough of its basis has turned
over.
"""

from . import field_io, full_gp, kernel, mission, planner, route, sogp
from .errors import (ConditioningError, ContractError, FieldFormatError, InputError,
                     NumericalError, SingularModelError)

__version__ = "0.1.0"

__all__ = [
    "field_io", "full_gp", "kernel", "mission", "planner", "route", "sogp",
    "ConditioningError", "ContractError", "FieldFormatError", "InputError",
    "NumericalError", "SingularModelError",
]
