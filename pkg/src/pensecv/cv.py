"""Choosing the penalty level by cross-validation.

Two engines share the fold machinery:

* :func:`naive_cv` refits every training fold from scratch, keeps only the
  best minimum found per lambda, and summarizes pooled held-out errors with a
  robust metric.
* :func:`ris_cv` tracks every retained full-data minimum.  Fold fits start
  from the full-data minima, each full-data minimum is paired with the fold
  minimum whose robustness weights correlate best with its own, and held-out
  errors are weighted by the full-data minimum's robustness weights.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Sequence

import numpy as np

from .exceptions import AllInfinite, KTooLarge, PenseError, ZeroVariance
from .metrics import METRICS, TAU_CUTOFF, metric_mape, metric_rmspe, metric_tau
from .pense import LocalMinimum, LossSpec, MinimaRegistry, compute_path, local_optimize, merge_minima
from .enet import PenaltySpec
from .rho import WeightVector

log = logging.getLogger(__name__)

__all__ = [
    "FoldPlan", "make_folds", "replication_seed", "metric_rmspe", "metric_mape", "metric_tau",
    "weight_similarity", "match_surrogates", "weighted_rmspe", "naive_cv", "ris_cv",
    "select_lambda", "CvOutcome", "Selection", "SurrogateMatch",
]


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """A random partition of ``n`` observations into ``K`` folds (labels ``0..K-1``)."""

    n: int
    K: int
    assignment: np.ndarray
    rng_seed: object = None

    def test_rows(self, k) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)

    def train_rows(self, k) -> np.ndarray:
        return np.flatnonzero(self.assignment != k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.K)


def make_folds(n: int, K: int, rng_seed=0) -> FoldPlan:
    """Uniformly random partition with fold sizes ``floor(n/K)`` or ``ceil(n/K)``."""
    if K > n:
        raise KTooLarge(f"cannot split {n} observations into {K} folds")
    if K < 2:
        raise ValueError("need at least 2 folds")
    perm = np.random.default_rng(rng_seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % K
    return FoldPlan(n, K, assignment, rng_seed)


def replication_seed(seed, r: int) -> int:
    """Seed of the fold split in replication ``r``; both engines use the same splits."""
    return int(np.random.SeedSequence([int(seed), int(r)]).generate_state(1)[0])


class Selection(NamedTuple):
    lam: float
    index: int
    q: int
    e_hat: float
    sd: float


@dataclass(eq=False)
class CvOutcome:
    """Cross-validated prediction error per (lambda, minimum).

    ``e_hat[t, q]`` and ``sd[t, q]`` are ``+inf`` for slots without a minimum
    or without any valid fold evaluation.  ``replicates[r, t, q]`` holds the
    per-replication estimates.
    """

    engine: str
    metric: str
    lambdas: np.ndarray
    e_hat: np.ndarray
    sd: np.ndarray
    replicates: np.ndarray
    n_minima: np.ndarray
    selected_q: np.ndarray
    K: int
    R: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def curve(self) -> np.ndarray:
        """``e_hat`` of the selected minimum at each lambda."""
        return self.e_hat[np.arange(len(self.lambdas)), self.selected_q]

    @property
    def curve_sd(self) -> np.ndarray:
        return self.sd[np.arange(len(self.lambdas)), self.selected_q]


def _aggregate(replicates, ddof):
    R = replicates.shape[0]
    with np.errstate(invalid="ignore"):
        finite = np.isfinite(replicates)
        n_ok = finite.sum(axis=0)
        filled = np.where(finite, replicates, 0.0)
        mean = np.where(n_ok > 0, filled.sum(axis=0) / np.maximum(n_ok, 1), np.inf)
        dev = np.where(finite, replicates - mean, 0.0)
        denom = n_ok - ddof
        sd = np.where(denom > 0, np.sqrt((dev * dev).sum(axis=0) / np.maximum(denom, 1)), 0.0)
    sd = np.where(n_ok > 0, sd, np.inf)
    if R == 1:
        sd = np.where(np.isfinite(mean), 0.0, np.inf)
    return mean, sd


def _select_q(e_hat):
    # argmin over minima; argmin picks the first (lowest-objective) minimum on ties
    return np.argmin(e_hat, axis=1)


def _map_folds(fn, K, n_jobs):
    if n_jobs is None or n_jobs <= 1:
        return [fn(k) for k in range(K)]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, range(K)))


def _zero_weight_excess(minimum: LocalMinimum, loss: LossSpec, n: int) -> int:
    if loss.kind != "s-loss":
        return 0
    return max(0, minimum.n_zero_weights - int(np.floor(loss.delta * n + 1e-9)))


def naive_cv(registry: MinimaRegistry, x, y, loss: LossSpec, alpha, K=7, R=5, metric="tau",
             seed=0, c_tau=TAU_CUTOFF, loadings=None, n_jobs=1, **path_opts) -> CvOutcome:
    """K-fold CV of the best minimum per lambda, refitting each training fold from scratch.

    Each training fold runs the same pipeline as the full fit (fresh starts,
    :func:`compute_path` with ``M = 1``).  Held-out errors are pooled over
    folds and summarized by ``metric`` per lambda.  The estimate is the
    average over ``R`` replications; its spread is the root mean squared
    deviation of the replications (divisor ``R``).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    lambdas = registry.lambdas
    q = len(lambdas)
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    summarize = (lambda e: metric_tau(e, c_tau)) if metric == "tau" else METRICS[metric]
    path_opts.pop("M", None)
    reps = np.full((R, q, 1), np.inf)
    diag = {"failed_fits": 0, "zero_weight_violations": 0, "max_zero_weights": 0}
    for r in range(R):
        plan = make_folds(n, K, replication_seed(seed, r))

        def fit_fold(k):
            train, test = plan.train_rows(k), plan.test_rows(k)
            reg = compute_path(x[train], y[train], loss, alpha, lambdas, M=1,
                               loadings=loadings, **path_opts)
            return test, reg

        errors = np.full((n, q), np.nan)
        for test, reg in _map_folds(fit_fold, K, n_jobs):
            for t in range(q):
                if not reg[t]:
                    diag["failed_fits"] += 1
                    continue
                best = reg[t][0]
                errors[test, t] = y[test] - best.predict(x[test])
                excess = _zero_weight_excess(best, loss, n - test.size)
                diag["zero_weight_violations"] += int(excess > 0)
                diag["max_zero_weights"] = max(diag["max_zero_weights"], best.n_zero_weights)
        for t in range(q):
            e = errors[:, t]
            e = e[np.isfinite(e)]
            if e.size:
                reps[r, t, 0] = summarize(e)
    e_hat, sd = _aggregate(reps, ddof=0)
    diag["infinite_lambdas"] = [float(lambdas[t]) for t in range(q) if not np.isfinite(e_hat[t, 0])]
    return CvOutcome("naive", metric, lambdas.copy(), e_hat, sd, reps, np.ones(q, dtype=int),
                     np.zeros(q, dtype=int), K, R, diag)


def weight_similarity(w1, w2) -> float:
    """Pearson correlation of two weight vectors.

    Raises
    ------
    ZeroVariance
        If either vector is constant.
    """
    a = np.asarray(w1.weights if isinstance(w1, WeightVector) else w1, dtype=float)
    b = np.asarray(w2.weights if isinstance(w2, WeightVector) else w2, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("weight vectors must have equal length >= 2")
    a = a - a.mean()
    b = b - b.mean()
    na = np.sqrt(np.dot(a, a))
    nb = np.sqrt(np.dot(b, b))
    if na == 0 or nb == 0:
        raise ZeroVariance("a weight vector is constant")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


class SurrogateMatch(NamedTuple):
    index: np.ndarray
    similarity: np.ndarray
    fallback: np.ndarray


def match_surrogates(full_weights: Sequence, fold_minima: Sequence[LocalMinimum]) -> SurrogateMatch:
    """Pair each full-data minimum with its most similar fold minimum.

    ``full_weights[j]`` are the robustness weights of full-data minimum ``j``
    restricted to the fold's training rows; fold minima carry their own weights
    on those rows.  Similarity is the Pearson correlation of the weight
    vectors; ties go to the fold minimum with the lower objective.  Pairs with
    a constant weight vector score ``-inf``.  If every pair of a full-data
    minimum scores ``-inf``, the lowest-objective fold minimum is used and the
    match is flagged in ``fallback``.
    """
    if not len(full_weights) or not len(fold_minima):
        raise ValueError("both sets of minima must be non-empty")
    order = sorted(range(len(fold_minima)), key=lambda i: fold_minima[i].objective)
    index = np.empty(len(full_weights), dtype=np.int64)
    sims = np.empty(len(full_weights))
    fallback = np.zeros(len(full_weights), dtype=bool)
    for j, wj in enumerate(full_weights):
        best, best_sim = order[0], -np.inf
        for i in order:
            try:
                s = weight_similarity(wj, fold_minima[i].weights)
            except ZeroVariance:
                s = -np.inf
            if s > best_sim:
                best, best_sim = i, s
        index[j] = best
        sims[j] = best_sim
        fallback[j] = not np.isfinite(best_sim)
    return SurrogateMatch(index, sims, fallback)


def _weighted_rmspe(weights, errors) -> float:
    ok = np.isfinite(errors)
    w = weights[ok]
    sw = w.sum()
    if not sw > 0:
        return np.inf
    return float(np.sqrt(np.dot(w, errors[ok] ** 2) / sw))


def weighted_rmspe(full_min: LocalMinimum, surrogate_fits: Sequence[LocalMinimum],
                   folds: FoldPlan, x, y) -> float:
    """Held-out RMSPE weighted by the full-data minimum's robustness weights.

    Observation ``i`` in fold ``k`` is predicted by ``surrogate_fits[k]``.  A
    missing surrogate (``None``) removes that fold's rows from both sums.
    Returns ``+inf`` if the remaining weights sum to zero.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(surrogate_fits) != folds.K:
        raise ValueError("need one surrogate fit per fold")
    errors = np.full(folds.n, np.nan)
    for k, fit in enumerate(surrogate_fits):
        if fit is None:
            continue
        rows = folds.test_rows(k)
        errors[rows] = y[rows] - fit.predict(x[rows])
    return _weighted_rmspe(full_min.weights.weights, errors)


def _fold_minima(x, y, loss, penalty, starts, M, dedup_tol, fit_intercept, opts, diag):
    found = []
    for st in starts:
        try:
            found.append(local_optimize(x, y, loss, penalty, st.as_start("warm-from-full-fit"),
                                        fit_intercept, **opts))
        except (PenseError, FloatingPointError, ValueError) as exc:
            diag["failed_fits"] += 1
            log.info("fold optimization failed at lambda=%g: %s", penalty.lam, exc)
    return merge_minima(found, M, dedup_tol)


def ris_cv(registry: MinimaRegistry, x, y, loss: LossSpec, alpha, K=7, R=5, seed=0,
           loadings=None, fit_intercept=True, n_jobs=1, **optimizer_opts) -> CvOutcome:
    """Robust information-sharing CV over every retained full-data minimum.

    For each replication and fold, and each lambda, IRWLS on the training
    fold starts from every full-data minimum at that lambda; distinct results
    form the fold's minima (at most ``registry.M``).  Full-data minimum ``q``
    is scored by the held-out errors of its matched fold minima (see
    :func:`match_surrogates`), weighted by its own robustness weights.
    Estimates are averaged over ``R`` replications; the spread uses divisor
    ``R - 1``.  At each lambda the minimum with the smallest estimate is
    selected.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    lambdas = registry.lambdas
    nq = len(lambdas)
    counts = registry.counts()
    width = max(1, int(counts.max()))
    reps = np.full((R, nq, width), np.inf)
    diag = {"failed_fits": 0, "fallback_matches": 0, "zero_weight_violations": 0,
            "max_zero_weights": 0}
    full_w = [[m.weights.weights for m in registry[t]] for t in range(nq)]
    for r in range(R):
        plan = make_folds(n, K, replication_seed(seed, r))

        def fit_fold(k):
            train, test = plan.train_rows(k), plan.test_rows(k)
            local = {"failed_fits": 0}
            out = []
            for t in range(nq):
                if not counts[t]:
                    out.append(None)
                    continue
                penalty = PenaltySpec(float(lambdas[t]), alpha, loadings)
                minima = _fold_minima(x[train], y[train], loss, penalty, registry[t], registry.M,
                                      registry.dedup_tol, fit_intercept, optimizer_opts, local)
                if not minima:
                    out.append(None)
                    continue
                match = match_surrogates([w[train] for w in full_w[t]], minima)
                preds = np.stack([minima[i].predict(x[test]) for i in match.index])
                out.append((preds, int(match.fallback.sum()), minima))
            return test, out, local["failed_fits"]

        errors = [np.full((counts[t], n), np.nan) for t in range(nq)]
        for test, out, failed in _map_folds(fit_fold, K, n_jobs):
            diag["failed_fits"] += failed
            for t, item in enumerate(out):
                if item is None:
                    continue
                preds, n_fallback, minima = item
                diag["fallback_matches"] += n_fallback
                errors[t][:, test] = y[test] - preds
                for m in minima:
                    diag["zero_weight_violations"] += int(_zero_weight_excess(m, loss, n - test.size) > 0)
                    diag["max_zero_weights"] = max(diag["max_zero_weights"], m.n_zero_weights)
        for t in range(nq):
            for j in range(counts[t]):
                reps[r, t, j] = _weighted_rmspe(full_w[t][j], errors[t][j])
    e_hat, sd = _aggregate(reps, ddof=1)
    diag["infinite_lambdas"] = [float(lambdas[t]) for t in range(nq)
                                if not np.isfinite(e_hat[t]).any()]
    return CvOutcome("ris", "wrmspe", lambdas.copy(), e_hat, sd, reps, counts.copy(),
                     _select_q(e_hat), K, R, diag)


def select_lambda(outcome: CvOutcome, rule: Literal["min", "one-se"] = "min") -> Selection:
    """Pick ``(lambda, q)`` from a CV outcome.

    ``min`` takes the smallest estimate.  ``one-se`` takes the largest lambda
    whose estimate is within one standard error of the smallest.  Ties go to
    the larger lambda, then to the lower ``q``.

    Raises
    ------
    AllInfinite
        If no estimate is finite.
    """
    if rule not in ("min", "one-se"):
        raise ValueError(f"unknown selection rule {rule!r}")
    lam = outcome.lambdas
    qs = outcome.selected_q
    e = outcome.curve
    sd = outcome.curve_sd
    finite = np.flatnonzero(np.isfinite(e))
    if finite.size == 0:
        raise AllInfinite("no finite cross-validated error")
    # grid is descending, so scanning in index order visits larger lambdas first
    best = min(finite, key=lambda t: (e[t], -lam[t], qs[t]))
    if rule == "min":
        t = best
    else:
        bound = e[best] + (sd[best] if np.isfinite(sd[best]) else 0.0)
        within = [t for t in finite if e[t] <= bound]
        t = max(within, key=lambda t: (lam[t], -qs[t]))
    return Selection(float(lam[t]), int(t), int(qs[t]), float(e[t]), float(sd[t]))
