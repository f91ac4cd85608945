"""Weighted elastic-net least squares by cyclic coordinate descent."""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels as K
from .exceptions import AlphaZero, ZeroWeightSum


@dataclass(frozen=True)
class PenaltySpec:
    """Elastic-net penalty ``lambda * sum_j l_j ((1 - alpha)/2 b_j^2 + alpha |b_j|)``."""

    lam: float
    alpha: float = 1.0
    loadings: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be non-negative")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.loadings is not None:
            ld = np.asarray(self.loadings, dtype=float)
            if not (np.all(np.isfinite(ld)) and np.all(ld > 0)):
                raise ValueError("penalty loadings must be positive and finite")
            object.__setattr__(self, "loadings", ld)

    def loading_vector(self, p: int) -> np.ndarray:
        if self.loadings is None:
            return np.ones(p)
        if self.loadings.shape != (p,):
            raise ValueError(f"expected {p} penalty loadings, got {self.loadings.shape}")
        return self.loadings

    def value(self, beta) -> float:
        beta = np.asarray(beta, dtype=float)
        return self.lam * K.en_penalty(beta, self.alpha, self.loading_vector(beta.shape[0]))

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return PenaltySpec(lam, self.alpha, self.loadings)


class ENSolution(NamedTuple):
    intercept: float
    beta: np.ndarray
    converged: bool
    passes: int


def _as_problem(x, y, weights):
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValueError("x must be n x p and y of length n")
    if weights is None:
        w = np.ones(y.shape[0])
    else:
        w = np.ascontiguousarray(weights, dtype=float)
        if w.shape != y.shape or np.any(w < 0):
            raise ValueError("observation weights must be non-negative, one per row")
    if not w.sum() > 0:
        raise ZeroWeightSum("observation weights sum to zero")
    return x, y, w


def weighted_en_solve(x, y, penalty: PenaltySpec, weights=None, warm_start=None,
                      fit_intercept=True, tol=1e-8, max_passes=100_000) -> ENSolution:
    """Minimize the weighted elastic-net least-squares objective.

    ``(1 / (2 sum w)) sum_i w_i (y_i - b0 - x_i' beta)^2 + penalty(beta)``

    The intercept is never penalized.  Convergence is declared once a full
    pass changes no coefficient by more than ``tol`` on the weighted-standardized
    predictor scale.  A solve that exhausts ``max_passes`` returns its last
    iterate with ``converged=False``.
    """
    x, y, w = _as_problem(x, y, weights)
    p = x.shape[1]
    start = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    b0, beta, status, passes = K.en_cd(x, y, w, penalty.lam, penalty.alpha,
                                       penalty.loading_vector(p), start,
                                       fit_intercept, tol, max_passes)
    return ENSolution(float(b0), beta, status == K.OK, int(passes))


def en_objective(x, y, penalty: PenaltySpec, intercept, beta, weights=None) -> float:
    x, y, w = _as_problem(x, y, weights)
    r = y - intercept - x @ beta
    return float(0.5 * np.dot(w, r * r) / w.sum() + penalty.value(beta))


def lambda_max(x, y, alpha, weights=None, loadings=None, fit_intercept=True) -> float:
    """Smallest lambda at which ``beta = 0`` is stationary for the weighted problem."""
    if alpha <= 0:
        raise AlphaZero("no finite lambda_max for alpha = 0; supply a lambda grid")
    x, y, w = _as_problem(x, y, weights)
    wn = w / w.sum()
    r0 = y - (wn @ y if fit_intercept else 0.0)
    ld = np.ones(x.shape[1]) if loadings is None else np.asarray(loadings, dtype=float)
    grad = np.abs(x.T @ (wn * r0))
    return float(np.max(grad / ld) / alpha)
