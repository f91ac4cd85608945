"""Prediction-error summaries used for cross-validation and for scoring fits."""

import numpy as np

from .exceptions import EmptyErrors

TAU_CUTOFF = 3.0


def _errors(e):
    e = np.asarray(e, dtype=float).ravel()
    if e.size == 0:
        raise EmptyErrors("no prediction errors to summarize")
    return e


def metric_rmspe(errors) -> float:
    """Root mean squared prediction error."""
    e = _errors(errors)
    return float(np.sqrt(np.mean(e * e)))


def metric_mape(errors) -> float:
    """Median absolute prediction error."""
    return float(np.median(np.abs(_errors(errors))))


def metric_tau(errors, c_tau=TAU_CUTOFF) -> float:
    """τ-size: ``MAPE * sqrt(mean(min(c_tau, |e| / MAPE)^2))``.

    When the MAPE is 0 (at least half of the errors are 0) the formula's limit
    is returned: 0 for finite ``c_tau`` and the RMSPE for ``c_tau = inf``.
    """
    e = _errors(errors)
    if not c_tau > 0:
        raise ValueError("c_tau must be positive")
    mape = np.median(np.abs(e))
    if mape == 0:
        return metric_rmspe(e) if np.isinf(c_tau) else 0.0
    u = np.minimum(c_tau, np.abs(e) / mape)
    return float(mape * np.sqrt(np.mean(u * u)))


METRICS = {"rmspe": metric_rmspe, "mape": metric_mape, "tau": metric_tau}
