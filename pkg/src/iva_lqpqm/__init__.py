"""Independent vector analysis by AuxIVA with iterative projection with adjustment.

The IPA update reduces to a log-quadratically penalized quadratic minimization
(LQPQM) that is solved globally through the largest root of a secular equation.
"""

__version__ = "0.1.0"

from . import audio, auxiva, contrast, linalg, lqpqm, metrics, synthbench
from ._backend import BACKEND, available_backends
from .auxiva import DemixingState, run
from .contrast import ContrastModel, evaluate_iva_cost, laplace
from .errors import (
    ConvergenceFailure,
    DegenerateDenominator,
    DegenerateReference,
    MaxIterationsExceeded,
    NonPositiveZ,
    NotPositiveDefinite,
    NumericalError,
    PoleEvaluation,
    Singular,
    TooShort,
)
from .lqpqm import LqpqmProblem, LqpqmSolution

__all__ = [
    "BACKEND",
    "ContrastModel",
    "ConvergenceFailure",
    "DegenerateDenominator",
    "DegenerateReference",
    "DemixingState",
    "LqpqmProblem",
    "LqpqmSolution",
    "MaxIterationsExceeded",
    "NonPositiveZ",
    "NotPositiveDefinite",
    "NumericalError",
    "PoleEvaluation",
    "Singular",
    "TooShort",
    "audio",
    "auxiva",
    "available_backends",
    "contrast",
    "evaluate_iva_cost",
    "laplace",
    "linalg",
    "lqpqm",
    "metrics",
    "run",
    "synthbench",
]
