"""Exception hierarchy.

The CLI maps these onto exit codes: ``DomainError`` and ``AtlasCoverageError``
give 4, every ``NumericalError`` gives 3.
"""


class FinslerError(Exception):
    """Base class for all library errors."""


class DomainError(FinslerError, ValueError):
    """A point, parameter or interval lies outside where the operation is defined."""


class SingularInputError(DomainError):
    """Evaluation requested on the zero section (y = 0)."""


class DegenerateFlagError(DomainError):
    """Transverse edge of a flag is parallel to the flagpole."""


class RangeError(DomainError):
    """Trial-field parameters out of range (e.g. r > L or b <= 1)."""


class AlignmentError(DomainError):
    """A vector field is not sampled on the trajectory's grid."""


class AtlasCoverageError(FinslerError):
    """No chart of the atlas covers a point.

    ``point`` and ``t`` locate the escape when it happened during integration.
    """

    def __init__(self, message, point=None, t=None):
        super().__init__(message)
        self.point = point
        self.t = t


class NumericalError(FinslerError):
    """Base class for numerical failures."""


class ConvexityError(NumericalError):
    """Fundamental tensor is not positive definite at the evaluated (x, y)."""


class IntegrationAccuracyError(NumericalError):
    """Integrator drift exceeded the numerics policy."""


class NumericalDegeneracyError(NumericalError):
    """Rank deficiency in a frame construction or repair."""


class DegenerateFamilyError(NumericalError):
    """Jacobi matrix solution is numerically singular over a whole interval."""
