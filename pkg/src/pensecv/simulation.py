"""Synthetic regression data with heavy tails, good leverage points and contamination.

Clean data follow ``y = x' beta0 + eps`` with multivariate-t(4) predictors
(AR(1) correlation 0.5) and the first ``s = floor(log n)`` coefficients equal
to one.  Good leverage points inflate zero-coefficient predictors only.  The
contaminated rows come from three different linear models, each acting on its
own small set of zero-coefficient predictors that are pushed far from the
center of the predictor distribution.
"""

from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Tuple

import numpy as np
from scipy import stats

from .metrics import TAU_CUTOFF, metric_tau

ErrorFamily = Literal["gaussian", "laplace", "stable_1_5"]


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 100
    p: int = 50
    error_family: ErrorFamily = "stable_1_5"
    snr: float = 1.0
    leverage_fraction: float = 0.2
    leverage_multiplier: float = 8.0
    contamination_fraction: float = 0.3
    signal_values: Tuple[float, float, float] = (-1.5, -1.0, -0.5)
    contamination_snr: float = 10.0
    rng_seed: int = 0
    df: float = 4.0
    correlation: float = 0.5

    def __post_init__(self):
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")
        if self.error_family not in ("gaussian", "laplace", "stable_1_5"):
            raise ValueError(f"unknown error family {self.error_family!r}")
        if not 0 <= self.contamination_fraction < 0.5:
            raise ValueError("contamination_fraction must lie in [0, 0.5)")
        if not 0 <= self.leverage_fraction <= 1 - self.contamination_fraction:
            raise ValueError("leverage rows must fit among the clean rows")
        if not (self.snr > 0 and self.contamination_snr > 0):
            raise ValueError("signal-to-noise ratios must be positive")
        if len(self.signal_values) != 3:
            raise ValueError("three contamination signal values are required")
        object.__setattr__(self, "signal_values", tuple(float(v) for v in self.signal_values))

    @property
    def n_active(self) -> int:
        return int(np.floor(np.log(self.n)))

    @property
    def block_size(self) -> int:
        return int(np.floor(self.contamination_fraction * self.n / 3 + 1e-9))

    def covariance(self) -> np.ndarray:
        j = np.arange(self.p)
        return self.correlation ** np.abs(j[:, None] - j[None, :])


@dataclass(frozen=True, eq=False)
class SimulatedDataset:
    design: np.ndarray
    response: np.ndarray
    beta_true: np.ndarray
    true_error_scale: float
    contaminated_rows: Tuple[np.ndarray, ...] = ()
    leverage_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    contamination_columns: Tuple[np.ndarray, ...] = ()
    leverage_multipliers: Tuple[float, ...] = ()

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]

    def clean_mask(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        for rows in self.contaminated_rows:
            mask[rows] = False
        return mask


def _streams(seed):
    # independent generators for each stage so stages can be re-run in isolation
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def sample_predictors(config: SimulationConfig, n: int, rng) -> np.ndarray:
    """Multivariate t rows: correlated Gaussian rows divided by ``sqrt(chi2_df / df)``."""
    chol = np.linalg.cholesky(config.covariance())
    z = rng.standard_normal((n, config.p)) @ chol.T
    return z / np.sqrt(rng.chisquare(config.df, size=n) / config.df)[:, None]


def sample_errors(family: ErrorFamily, n: int, rng) -> np.ndarray:
    """Standard draws (unit scale parameter) from an error family."""
    if family == "gaussian":
        return rng.standard_normal(n)
    if family == "laplace":
        return rng.laplace(size=n)
    # symmetric stable, Chambers-Mallows-Stuck
    return stats.levy_stable.rvs(1.5, 0.0, size=n, random_state=rng)


def error_spread(family: ErrorFamily, e) -> float:
    """Empirical standard deviation for Gaussian errors, τ-size otherwise."""
    if family == "gaussian":
        return float(np.std(e, ddof=1))
    return metric_tau(e, TAU_CUTOFF)


def gen_clean(config: SimulationConfig) -> SimulatedDataset:
    """Clean data with the error scale set so that signal spread / error spread = sqrt(snr)."""
    rng_x, rng_e, _, _ = _streams(config.rng_seed)
    beta = np.zeros(config.p)
    beta[:config.n_active] = 1.0
    x = sample_predictors(config, config.n, rng_x)
    signal = x @ beta
    e0 = sample_errors(config.error_family, config.n, rng_e)
    scale = np.std(signal, ddof=1) / (np.sqrt(config.snr) * error_spread(config.error_family, e0))
    return SimulatedDataset(x, signal + scale * e0, beta, float(scale))


def contamination_blocks(config: SimulationConfig):
    m = config.block_size
    return tuple(np.arange(l * m, (l + 1) * m) for l in range(3)) if m > 0 else ()


def apply_leverage(ds: SimulatedDataset, config: SimulationConfig) -> SimulatedDataset:
    """Turn a random share of the clean rows into good leverage points.

    In each chosen row, the ``(p - s) / 2`` largest absolute entries among the
    zero-coefficient predictors are multiplied by ``leverage_multiplier``.
    Responses are left as they are; the row still follows the true model.
    """
    s = config.n_active
    inactive = np.arange(s, config.p)
    n_cols = inactive.size // 2
    n_rows = int(np.floor(config.leverage_fraction * config.n + 1e-9))
    if n_cols == 0 or n_rows == 0:
        return ds
    _, _, rng, _ = _streams(config.rng_seed)
    reserved = np.concatenate(contamination_blocks(config)) if config.block_size else []
    candidates = np.setdiff1d(np.arange(config.n), reserved)
    rows = np.sort(rng.choice(candidates, size=n_rows, replace=False))
    x = ds.design.copy()
    for i in rows:
        sub = x[i, inactive]
        top = inactive[np.argsort(-np.abs(sub), kind="stable")[:n_cols]]
        x[i, top] *= config.leverage_multiplier
    return replace(ds, design=x, leverage_rows=rows)


def _mahalanobis_sq(x, prec):
    return np.einsum("ij,jk,ik->i", x, prec, x)


def _smallest_multiplier(a, b, prec, target_sq):
    # smallest k >= 1 with (a + (k - 1) b)' P (a + (k - 1) b) >= target_sq for every row
    A = _mahalanobis_sq(b, prec)
    B = np.einsum("ij,jk,ik->i", a, prec, b)
    C = _mahalanobis_sq(a, prec)
    disc = np.maximum(B * B - A * (C - target_sq), 0.0)
    roots = np.concatenate([(-B + np.sqrt(disc)) / A, (-B - np.sqrt(disc)) / A])
    candidates = np.unique(np.concatenate([[0.0], roots[roots > 0]]))
    for t in candidates:
        # nudge past the root so the bound holds despite rounding
        t = t * (1 + 1e-12) + (1e-12 if t > 0 else 0.0)
        if np.all(_mahalanobis_sq(a + t * b, prec) >= target_sq):
            return 1.0 + t
    raise ArithmeticError("no multiplier satisfies the distance requirement")


def apply_contamination(ds: SimulatedDataset, config: SimulationConfig) -> SimulatedDataset:
    """Replace three consecutive blocks of rows by draws from contaminating models.

    Block ``l`` gets ``floor(log2 p)`` fresh zero-coefficient predictors ``J``
    whose values are scaled by the smallest ``k >= 1`` putting every row of the
    block at least twice as far (Mahalanobis distance under the AR(1)
    correlation) from the center as the farthest uncontaminated row.  Its
    responses follow ``y = sum_{j in J} u_l x_j + noise`` with Gaussian noise
    at signal-to-noise ratio ``contamination_snr``.
    """
    blocks = contamination_blocks(config)
    if not blocks:
        return ds
    s = config.n_active
    n_j = int(np.floor(np.log2(config.p)))
    if config.p - s < n_j:
        raise ValueError("not enough zero-coefficient predictors for contamination")
    _, _, _, rng = _streams(config.rng_seed)
    prec = np.linalg.inv(config.covariance())
    x = ds.design.copy()
    y = ds.response.copy()
    clean = np.setdiff1d(np.arange(config.n), np.concatenate(blocks))
    target_sq = 4.0 * _mahalanobis_sq(x[clean], prec).max()
    columns, multipliers = [], []
    for rows, u in zip(blocks, config.signal_values):
        cols = np.sort(rng.choice(np.arange(s, config.p), size=n_j, replace=False))
        a = x[rows]
        b = np.zeros_like(a)
        b[:, cols] = a[:, cols]
        k = _smallest_multiplier(a, b, prec, target_sq)
        x[np.ix_(rows, cols)] *= k
        signal = u * x[np.ix_(rows, cols)].sum(axis=1)
        sd = np.std(signal, ddof=1) if rows.size > 1 else abs(signal[0])
        y[rows] = signal + sd / np.sqrt(config.contamination_snr) * rng.standard_normal(rows.size)
        columns.append(cols)
        multipliers.append(float(k))
    return replace(ds, design=x, response=y, contaminated_rows=blocks,
                   contamination_columns=tuple(columns), leverage_multipliers=tuple(multipliers))


def simulate(config: SimulationConfig) -> SimulatedDataset:
    """Clean draw, then good leverage points, then contamination."""
    return apply_contamination(apply_leverage(gen_clean(config), config), config)


def gen_test(config: SimulationConfig, n_test: int = 10_000, seed: Optional[int] = None,
             error_scale: Optional[float] = None):
    """Independent clean test sample ``(x, y)`` from the uncontaminated model."""
    rng = np.random.default_rng(np.random.SeedSequence([config.rng_seed, 0x7e57] if seed is None
                                                       else seed))
    beta = np.zeros(config.p)
    beta[:config.n_active] = 1.0
    x = sample_predictors(config, n_test, rng)
    scale = gen_clean(config).true_error_scale if error_scale is None else error_scale
    return x, x @ beta + scale * sample_errors(config.error_family, n_test, rng)


def true_prediction_error(predictions, y_test, error_scale, family: ErrorFamily) -> float:
    """Spread of test prediction errors relative to the true error scale."""
    return error_spread(family, np.asarray(y_test) - np.asarray(predictions)) / error_scale
