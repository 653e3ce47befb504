"""Reduction of complex fully nonlinear elliptic equations to real ones.

Symmetric-matrix algebra for the complex-to-real embedding, elementary
symmetric functions, the equation families with their structure checks, a
concave envelope of the operator, a periodic finite-difference solver and
a regularity measurement harness.
"""

from .errors import (
    ConfigError,
    IndexOutOfRange,
    LineSearchFailed,
    MaxIterations,
    MetricNotPositive,
    NotAdmissible,
    NotJInvariant,
    OptimizerDiverged,
    OutsideDomain,
    TooFewPoints,
)
from .operators import EquationSpec, check_structure, default_set, evaluate_F, F_gradient
from .grid import PeriodicGrid, ScalarField, TrigField, manufacture, newton_solve

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "IndexOutOfRange", "LineSearchFailed", "MaxIterations", "MetricNotPositive",
    "NotAdmissible", "NotJInvariant", "OptimizerDiverged", "OutsideDomain", "TooFewPoints",
    "EquationSpec", "check_structure", "default_set", "evaluate_F", "F_gradient",
    "PeriodicGrid", "ScalarField", "TrigField", "manufacture", "newton_solve",
]
