"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for bad input, 3 for estimation failures, 4 for solver failures.
"""


class QuadroError(Exception):
    exit_code = 2


# -- input / validation -------------------------------------------------------

class InputError(QuadroError, ValueError):
    exit_code = 2


class DimensionMismatch(InputError):
    pass


class NotPositiveSemidefinite(InputError):
    pass


class InvalidKurtosis(InputError):
    pass


class InvalidSpec(InputError):
    pass


class ParseError(InputError):
    pass


class UnsupportedDimension(InputError):
    pass


class DimensionTooLarge(InputError):
    pass


class NonGaussianClass(InputError):
    pass


class UnequalCovariances(InputError):
    pass


class WrongOrientation(InputError):
    pass


class InvalidDf(InputError):
    pass


class DegenerateProjection(InputError):
    pass


# -- estimation ---------------------------------------------------------------

class EstimationError(QuadroError):
    exit_code = 3


class EmptyDataset(EstimationError):
    pass


class EmptyClass(EstimationError):
    pass


class TooFewRows(EstimationError):
    pass


class SingularCovariance(EstimationError):
    pass


class SingularPooledCovariance(EstimationError):
    pass


class FoldTooSmall(EstimationError):
    pass


# -- solver -------------------------------------------------------------------

class SolverError(QuadroError):
    exit_code = 4


class NonconvexObjective(SolverError):
    pass


class InfeasibleProblem(SolverError):
    """The gap constraint is identically zero (classes share both moments)."""


class DidNotConverge(UserWarning):
    """Issued (not raised) when iteration caps are hit far from feasibility."""
