"""Local minima of the penalized S- and M-loss and their regularization paths.

The objective is ``loss(y - b0 - X beta) + lambda * P(beta)`` with the
elastic-net penalty ``P``.  For the S-loss, ``loss = sigma_M(r)^2 / 2``; for the
M-loss, ``loss = mean(rho(r / s) / rho_sup) / 2`` with a fixed scale ``s``.
Both are bounded, so the objective has many local minima.  Each is found by
IRWLS started from a given point, and :func:`compute_path` keeps up to ``M``
distinct minima per penalty level.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Literal, NamedTuple, Optional, Sequence, Union

import numpy as np

from . import _kernels as K
from .enet import PenaltySpec, weighted_en_solve
from .exceptions import AlphaZero, DegenerateResiduals, PenseError, ZeroWeightSum
from .rho import MScaleSpec, RhoFunction, WeightVector, calibrate_cutoff, normalize_weights

log = logging.getLogger(__name__)

Origin = Literal["cold", "subset-start", "warm-from-lambda", "warm-from-full-fit", "user"]


@dataclass(frozen=True)
class LossSpec:
    """Robust loss: ``kind="s-loss"`` uses ``mscale``; ``"m-loss"`` uses ``fixed_scale``."""

    kind: Literal["s-loss", "m-loss"] = "s-loss"
    rho: RhoFunction = field(default_factory=lambda: calibrate_cutoff("bisquare", 0.25))
    mscale: Optional[MScaleSpec] = None
    fixed_scale: Optional[float] = None

    def __post_init__(self):
        if self.kind == "s-loss":
            if self.mscale is None:
                object.__setattr__(self, "mscale", MScaleSpec(0.25))
            if self.fixed_scale is not None:
                raise ValueError("the S-loss estimates its scale; fixed_scale must be None")
        elif self.kind == "m-loss":
            if self.fixed_scale is None or not self.fixed_scale > 0:
                raise ValueError("the M-loss needs a positive fixed_scale")
            if self.mscale is not None:
                raise ValueError("the M-loss does not use an M-scale")
        else:
            raise ValueError(f"unknown loss kind {self.kind!r}")

    @classmethod
    def s_loss(cls, delta=0.25, rho_kind="bisquare", **mscale_opts):
        """S-loss with a rho calibrated for consistency at the normal model."""
        return cls("s-loss", calibrate_cutoff(rho_kind, delta), MScaleSpec(delta, **mscale_opts))

    @classmethod
    def m_loss(cls, scale, rho=None):
        return cls("m-loss", rho if rho is not None else calibrate_cutoff("bisquare", 0.5),
                   None, float(scale))

    @property
    def delta(self) -> float:
        return self.mscale.delta if self.kind == "s-loss" else np.nan

    def _kernel_args(self):
        code = K.S_LOSS if self.kind == "s-loss" else K.M_LOSS
        ms = self.mscale or MScaleSpec()
        return (code, self.rho.code, self.rho.params, self.rho.normalizer,
                ms.delta, self.fixed_scale or 1.0), (ms.tolerance, ms.max_iterations)


class Start(NamedTuple):
    beta: np.ndarray
    intercept: Optional[float] = None
    origin: Origin = "cold"


@dataclass(frozen=True, eq=False)
class LocalMinimum:
    intercept: float
    beta: np.ndarray
    objective: float
    scale: float
    weights: WeightVector
    lam: float
    origin: Origin = "cold"
    converged: bool = True
    iterations: int = 0

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate(([self.intercept], self.beta))

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.beta))

    @property
    def l1_norm(self) -> float:
        return float(np.abs(self.beta).sum())

    @property
    def n_zero_weights(self) -> int:
        return self.weights.n_zero

    def predict(self, x) -> np.ndarray:
        return self.intercept + np.asarray(x, dtype=float) @ self.beta

    def as_start(self, origin: Origin) -> Start:
        return Start(self.beta, self.intercept, origin)


def _prepare(x, y):
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValueError("x must be n x p and y of length n")
    return x, y


def objective(x, y, loss: LossSpec, penalty: PenaltySpec, intercept, beta):
    """Objective value and scale at ``(intercept, beta)``."""
    x, y = _prepare(x, y)
    beta = np.asarray(beta, dtype=float)
    (lk, code, par, norm, delta, s), (mtol, mit) = loss._kernel_args()
    r = K.residuals(x, y, float(intercept), beta)
    obj, scale, status = K.robust_objective(r, beta, lk, code, par, norm, delta, s,
                                            penalty.lam, penalty.alpha,
                                            penalty.loading_vector(beta.shape[0]), mtol, mit)
    if status == K.DEGENERATE:
        raise DegenerateResiduals("too many exactly-zero residuals for the M-scale")
    return float(obj), float(scale)


def _weights(r, loss: LossSpec, scale):
    if not scale > 0:
        return WeightVector(np.ones_like(r), 0.0)
    return WeightVector(normalize_weights(loss.rho.weight(r / scale)), float(scale))


def local_optimize(x, y, loss: LossSpec, penalty: PenaltySpec, start=None,
                   fit_intercept=True, tol=1e-9, max_iterations=500,
                   inner_tol=1e-8, inner_max_passes=100_000) -> LocalMinimum:
    """Descend from ``start`` to a local minimum of the penalized robust objective.

    Alternates between computing robustness weights at the current residuals and
    solving the matching weighted elastic-net problem.  Stops once an outer step
    lowers the objective by less than ``tol * (1 + |objective|)``.

    ``start`` may be a :class:`Start`, a :class:`LocalMinimum`, a coefficient
    vector, or ``None`` (all zero).  Without an intercept, the start's intercept
    is the median of its residuals.

    Raises
    ------
    DegenerateResiduals
        From the M-scale, if the iterate fits too many observations exactly.
    ZeroWeightSum
        If every observation falls in the flat part of rho (M-loss only).
    """
    x, y = _prepare(x, y)
    n, p = x.shape
    origin = "cold"
    if start is None:
        beta, b0 = np.zeros(p), None
    elif isinstance(start, LocalMinimum):
        beta, b0, origin = start.beta, start.intercept, start.origin
    elif isinstance(start, Start):
        beta, b0, origin = start.beta, start.intercept, start.origin
    else:
        beta, b0 = np.asarray(start, dtype=float), None
    beta = np.array(beta, dtype=float)
    if beta.shape != (p,):
        raise ValueError(f"start has {beta.shape} coefficients, expected ({p},)")
    if b0 is None:
        b0 = float(np.median(y - x @ beta)) if fit_intercept else 0.0
    elif not fit_intercept:
        b0 = 0.0
    (lk, code, par, norm, delta, s), (mtol, mit) = loss._kernel_args()
    ld = penalty.loading_vector(p)
    b0, beta, obj, scale, status, it = K.irwls(
        x, y, lk, code, par, norm, delta, s, penalty.lam, penalty.alpha, ld,
        float(b0), beta, fit_intercept, tol, max_iterations, inner_tol,
        inner_max_passes, mtol, mit)
    if status == K.DEGENERATE:
        raise DegenerateResiduals("too many exactly-zero residuals for the M-scale")
    if status == K.ZERO_WEIGHTS:
        raise ZeroWeightSum("every observation has zero robustness weight")
    r = K.residuals(x, y, b0, beta)
    return LocalMinimum(float(b0), beta, float(obj), float(scale), _weights(r, loss, scale),
                        float(penalty.lam), origin, status == K.OK, int(it))


def generate_starts(x, y, loss: LossSpec, penalty: PenaltySpec, n_subsets=10, seed=0,
                    fit_intercept=True) -> List[Start]:
    """Starting points: zero, the plain EN fit, and EN fits on random subsets.

    Subsets have ``min(n / 2, 3 max(5, k))`` rows where ``k`` is the number of
    nonzero coefficients in the plain EN fit.
    """
    x, y = _prepare(x, y)
    n, p = x.shape
    starts = [Start(np.zeros(p), None, "cold")]
    cold = weighted_en_solve(x, y, penalty, fit_intercept=fit_intercept)
    starts.append(Start(cold.beta, None, "cold"))
    if n_subsets <= 0:
        return starts
    rng = np.random.default_rng(seed)
    size = int(min(n // 2, 3 * max(5, np.count_nonzero(cold.beta))))
    size = max(size, 2)
    for _ in range(n_subsets):
        idx = np.sort(rng.choice(n, size=size, replace=False))
        sub = weighted_en_solve(x[idx], y[idx], penalty, fit_intercept=fit_intercept)
        starts.append(Start(sub.beta, None, "subset-start"))
    return starts


def _distance(a: LocalMinimum, b: LocalMinimum) -> float:
    ca, cb = a.coefficients, b.coefficients
    return float(np.linalg.norm(ca - cb) / (1.0 + np.linalg.norm(ca)))


def merge_minima(candidates: Sequence[LocalMinimum], M: int, dedup_tol=1e-4) -> List[LocalMinimum]:
    """Keep the ``M`` best pairwise-distinct minima, ordered by objective."""
    kept: List[LocalMinimum] = []
    for cand in sorted(candidates, key=lambda m: m.objective):
        if not np.isfinite(cand.objective):
            continue
        if any(_distance(k, cand) <= dedup_tol for k in kept):
            continue
        kept.append(cand)
        if len(kept) == M:
            break
    return kept


@dataclass(frozen=True, eq=False)
class MinimaRegistry:
    """Up to ``M`` distinct local minima per penalty level, best first."""

    lambdas: np.ndarray
    minima: tuple
    M: int
    dedup_tol: float = 1e-4

    def __len__(self):
        return len(self.lambdas)

    def __getitem__(self, i) -> tuple:
        return self.minima[i]

    def best(self, i) -> LocalMinimum:
        return self.minima[i][0]

    def counts(self) -> np.ndarray:
        return np.array([len(m) for m in self.minima])

    def global_path(self) -> List[LocalMinimum]:
        return [m[0] for m in self.minima]


StartsArg = Union[None, Sequence, Callable[[PenaltySpec], Sequence]]


def _optimize_all(x, y, loss, penalty, starts, fit_intercept, opts):
    found = []
    for st in starts:
        try:
            found.append(local_optimize(x, y, loss, penalty, st, fit_intercept, **opts))
        except (PenseError, FloatingPointError, ValueError) as exc:
            log.info("dropping start (%s) at lambda=%g: %s",
                     getattr(st, "origin", "user"), penalty.lam, exc)
    return found


def _explore(x, y, loss, penalty, starts, fit_intercept, opts, iterations, keep, dedup_tol):
    # a few IRWLS steps from every start; the best `keep` distinct iterates
    # become the starts of full optimizations
    opts = dict(opts, max_iterations=iterations)
    found = _optimize_all(x, y, loss, penalty, starts, fit_intercept, opts)
    return [m.as_start(m.origin) for m in merge_minima(found, keep, dedup_tol)]


def compute_path(x, y, loss: LossSpec, alpha, lambdas, M=40, starts: StartsArg = None,
                 n_subsets=10, seed=0, dedup_tol=1e-4, loadings=None,
                 fit_intercept=True, start_every=None, explore_iterations=None,
                 explore_keep=10, **optimizer_opts) -> MinimaRegistry:
    """Track up to ``M`` local minima along a descending lambda grid.

    At the first lambda, IRWLS runs from the full set of generated starts
    (see :func:`generate_starts`) and from any user ``starts`` (a list, or a
    callable receiving the :class:`PenaltySpec`).  At later lambdas it runs
    from every minimum retained at the previous lambda plus the zero and plain
    EN starts; with ``start_every=k`` the full start set is regenerated at
    every ``k``-th lambda as well.  Minima closer than ``dedup_tol`` (relative
    coefficient distance) are merged, keeping the lower objective.

    With ``explore_iterations=k``, freshly generated starts first get only
    ``k`` IRWLS iterations and just the ``explore_keep`` best of them are
    optimized to convergence.  Warm starts from the previous lambda are always
    optimized to convergence.
    """
    x, y = _prepare(x, y)
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0 or np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambda grid must be non-empty and strictly descending")
    if M < 1:
        raise ValueError("M must be at least 1")
    path = []
    previous: List[LocalMinimum] = []
    for t, lam in enumerate(lambdas):
        penalty = PenaltySpec(float(lam), alpha, loadings)
        full = t == 0 or (start_every is not None and t % start_every == 0)
        cand_starts = generate_starts(x, y, loss, penalty, n_subsets if full else 0,
                                      seed, fit_intercept)
        if callable(starts):
            cand_starts += list(starts(penalty))
        elif full and starts is not None:
            cand_starts += [s if isinstance(s, Start) else Start(np.asarray(s, float), None, "user")
                            for s in starts]
        if explore_iterations:
            cand_starts = _explore(x, y, loss, penalty, cand_starts, fit_intercept,
                                   optimizer_opts, explore_iterations, explore_keep, dedup_tol)
        cand_starts += [m.as_start("warm-from-lambda") for m in previous]
        found = _optimize_all(x, y, loss, penalty, cand_starts, fit_intercept, optimizer_opts)
        previous = merge_minima(found, M, dedup_tol)
        if not previous:
            log.warning("no local minimum found at lambda=%g", lam)
        path.append(tuple(previous))
    return MinimaRegistry(lambdas, tuple(path), M, dedup_tol)


def intercept_only_fit(x, y, loss: LossSpec, **optimizer_opts) -> LocalMinimum:
    x, y = _prepare(x, y)
    n = y.shape[0]
    fit = local_optimize(np.zeros((n, 0)), y, loss, PenaltySpec(0.0), None, True, **optimizer_opts)
    return LocalMinimum(fit.intercept, np.zeros(x.shape[1]), fit.objective, fit.scale,
                        fit.weights, np.inf, "cold", fit.converged, fit.iterations)


def robust_lambda_max(x, y, loss: LossSpec, alpha, loadings=None) -> float:
    """Smallest lambda at which the robust intercept-only fit is stationary."""
    if alpha <= 0:
        raise AlphaZero("no finite lambda_max for alpha = 0; supply a lambda grid")
    x, y = _prepare(x, y)
    n, p = x.shape
    fit = intercept_only_fit(x, y, loss)
    r = y - fit.intercept
    if not fit.scale > 0:
        raise DegenerateResiduals("response is constant")
    rt = r / fit.scale
    w = loss.rho.weight(rt)
    if loss.kind == "s-loss":
        denom = np.dot(w, rt * rt)
    else:
        denom = 2.0 * n * fit.scale ** 2 * loss.rho.normalizer
    grad = np.abs(x.T @ (w * r)) / denom
    ld = np.ones(p) if loadings is None else np.asarray(loadings, dtype=float)
    return float(np.max(grad / ld) / alpha)


def lambda_grid(x, y, loss: LossSpec, alpha, q=50, min_ratio=1e-3, loadings=None) -> np.ndarray:
    """``q`` log-spaced values from the robust ``lambda_max`` down to ``min_ratio`` of it."""
    lmax = robust_lambda_max(x, y, loss, alpha, loadings)
    return np.geomspace(lmax, lmax * min_ratio, q)


def adaptive_loadings(pilot: LocalMinimum, exponent=1.0) -> np.ndarray:
    """Adaptive-EN penalty loadings ``(|beta_j| + eps)^(-exponent)`` from a pilot fit."""
    if not exponent > 0:
        raise ValueError("exponent must be positive")
    beta = np.abs(np.asarray(pilot.beta if isinstance(pilot, LocalMinimum) else pilot, dtype=float))
    top = beta.max() if beta.size else 0.0
    eps = 1e-6 * top if top > 0 else 1e-6
    # a vanishingly small pilot would overflow; cap so loadings stay finite
    with np.errstate(over="ignore"):
        return np.minimum((beta + eps) ** (-exponent), np.finfo(float).max)
