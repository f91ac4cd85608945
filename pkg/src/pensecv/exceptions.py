class PenseError(Exception):
    """Base class for errors raised by this package."""


class NonConvergence(PenseError):
    pass


class DegenerateResiduals(PenseError):
    """Too many exactly-zero residuals for the M-scale equation to have a positive root."""


class ZeroWeightSum(PenseError):
    pass


class AlphaZero(PenseError):
    """``lambda_max`` does not exist for a pure ridge penalty."""


class KTooLarge(PenseError):
    pass


class EmptyErrors(PenseError):
    pass


class ZeroVariance(PenseError):
    """A weight vector is constant, so its correlation is undefined."""


class AllInfinite(PenseError):
    """No finite prediction-error estimate to select from."""
