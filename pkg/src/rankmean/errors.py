"""Exception hierarchy.

Precondition violations (bad inputs, cut locus, ball radius, degenerate
spectra) and runtime failures (non-convergence, solver breakdown) are kept
apart so the command line can map them to distinct exit codes.
"""


class RankMeanError(Exception):
    """Base class for all errors raised by this package."""


class PreconditionError(RankMeanError):
    """An input violates a documented precondition."""


class DimensionMismatchError(PreconditionError):
    """Operands have incompatible dimensions."""


class DomainError(PreconditionError):
    """A scalar argument lies outside its admissible range."""


class NotPositiveDefiniteError(PreconditionError):
    """A matrix required to be symmetric positive definite is not."""


class NotPsdError(PreconditionError):
    """A matrix required to be positive semi-definite has a genuinely negative eigenvalue."""


class RankDeficientError(PreconditionError):
    """A matrix does not reach the requested rank."""


class AmbiguousSubspaceError(PreconditionError):
    """The eigenvalue gap is too small for the dominant subspace to be well-defined."""


class CutLocusError(PreconditionError):
    """Two subspaces have a principal angle at (or numerically at) pi/2, where the mean is undefined."""


class OutOfBallError(PreconditionError):
    """Input subspaces leave the geodesic ball in which the subspace mean is guaranteed unique."""


class FileFormatError(PreconditionError):
    """A matrix file does not follow the documented plain-text format."""


class NumericalError(RankMeanError):
    """An underlying dense solver failed to converge or broke down."""


class ConvergenceError(RankMeanError):
    """An iterative mean did not reach tolerance within the iteration budget."""

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
