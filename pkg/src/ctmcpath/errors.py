"""Exception hierarchy for rate-matrix validation, sampling, and cost analysis."""


class CtmcError(Exception):
    """Base class for all library errors."""


class NegativeRate(CtmcError):
    """An off-diagonal rate entry is negative."""


class RowSumViolation(CtmcError):
    """A generator row does not sum to zero within tolerance."""


class ZeroExitRate(CtmcError):
    """A state has no outgoing rate (absorbing states are unsupported)."""


class SingularSystem(CtmcError):
    """The stationary linear system is rank-deficient beyond the single
    expected null direction, or produced a non-positive distribution."""


class ComplexSpectrum(CtmcError):
    """The generator is not real-diagonalizable within tolerance; direct
    sampling is unavailable for it."""


class DetailedBalanceViolation(CtmcError):
    """The reversible decomposition path was requested for a matrix that
    does not satisfy detailed balance."""


class NumericalBreakdown(CtmcError):
    """A probability came out negative or a normalization drifted beyond
    what roundoff can explain."""


class NonMonotoneTimes(CtmcError):
    """Observation times are not strictly increasing from zero."""


class UnreachableEndpoint(CtmcError):
    """The endpoint pair has (numerically) zero transition probability, so
    conditioning on it is undefined."""


class RejectionBudgetExceeded(CtmcError):
    """Rejection sampling hit its attempt budget without an acceptance."""

    def __init__(self, message, attempts=None):
        super().__init__(message)
        self.attempts = attempts


class RootFindFailure(CtmcError):
    """The monotone-CDF bracket invariant was violated during inversion."""


class SeriesTruncation(CtmcError):
    """The jump-count series did not reach the target mass within its cap."""


class InsufficientVariation(CtmcError):
    """A regression design matrix is rank-deficient (not enough distinct
    horizons or sizes)."""


class InvalidFrequencyVector(CtmcError):
    """A frequency vector is not a positive probability vector of the
    expected length."""
