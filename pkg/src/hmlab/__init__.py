"""Numerical laboratory for harmonic maps with potential.

Maps ``phi`` from flat domains into constant-curvature targets satisfying
``tau(phi) = -grad V(phi)`` are computed by explicit gradient flow and audited
against the identities and estimates known for them.
"""

from hmlab.errors import (ChartDomainError, ConfigError, GridRangeError, LabError,
                          OutOfCapError, StabilityError)
from hmlab.fields import DomainGrid, MapField, Region
from hmlab.geometry import TargetChart, make_chart
from hmlab.potentials import Potential, theorem_constants

__version__ = "0.1.0"

__all__ = [
    "ChartDomainError", "ConfigError", "DomainGrid", "GridRangeError", "LabError", "MapField",
    "OutOfCapError", "Potential", "Region", "StabilityError", "TargetChart", "make_chart",
    "theorem_constants", "__version__",
]
