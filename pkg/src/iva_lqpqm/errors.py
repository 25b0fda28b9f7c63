"""Exception hierarchy.

Everything numerical derives from :class:`NumericalError` so that the CLI can
map it to exit code 2 without catching programming errors.
"""


class NumericalError(ArithmeticError):
    """Base class for numerical failures."""


class NotPositiveDefinite(NumericalError):
    pass


class Singular(NumericalError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class MaxIterationsExceeded(ConvergenceFailure):
    pass


class PoleEvaluation(NumericalError):
    """The secular function was evaluated on one of its poles."""


class NonPositiveZ(NumericalError):
    """The Schur complement offset of an IPA subproblem is clearly negative."""


class DegenerateDenominator(NumericalError):
    pass


class DegenerateReference(NumericalError):
    pass


class TooShort(ValueError):
    """Signal shorter than one analysis frame."""
