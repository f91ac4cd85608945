"""Non-smooth regularization paths in a two-population univariate regression.

A fraction ``b`` of the observations follows ``y = beta_c x + noise`` and the
rest ``y = beta_star x + noise``.  With a bounded rho and far-apart slopes, the
penalized M-objective has one minimum near each slope.  As lambda shrinks, the
minimum near ``beta_c`` loses the objective race against the one near
``beta_star`` at some lambda, so the global minimum jumps across the gap while
each basin's minimum moves smoothly.

The loss uses the fixed scale ``s = 1 / sqrt(2 rho_sup)``, which makes it
``(1 / 2n) sum r_i^2`` for residuals well inside the quadratic part of rho.
The minima are then expected near ``beta_c - lambda n / (b n - 2)`` and
``beta_star - lambda n / ((1 - b) n - 2)``.
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .pense import LossSpec, MinimaRegistry, compute_path
from .rho import RhoFunction, calibrate_cutoff


@dataclass(frozen=True)
class UnivariateScenario:
    sigma_c: float = 0.01
    sigma_star: float = 0.1
    beta_c: float = 0.5
    beta_star: float = 100.0
    b: float = 0.3
    n: int = 100
    rho: RhoFunction = field(default_factory=lambda: calibrate_cutoff("bisquare", 0.5))
    lambda_grid: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 <= self.b < 0.5:
            raise ValueError("b must lie in [0, 0.5)")
        if self.sigma_c <= 0 or self.sigma_star <= 0:
            raise ValueError("noise levels must be positive")
        if self.lambda_grid is None:
            # linear spacing keeps adjacent-lambda drift uniform along each branch;
            # above ~0.5 / beta_star the trivial minimum at 0 can become global
            object.__setattr__(self, "lambda_grid", np.linspace(4e-3, 1e-4, 40))
        else:
            grid = np.asarray(self.lambda_grid, dtype=float)
            if np.any(np.diff(grid) >= 0):
                raise ValueError("lambda grid must be strictly descending")
            object.__setattr__(self, "lambda_grid", grid)

    @property
    def n_c(self) -> int:
        return int(round(self.b * self.n))

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(2.0 * self.rho.rho_sup)

    def loss(self) -> LossSpec:
        return LossSpec("m-loss", self.rho, None, self.scale)

    def generate(self, seed=0):
        """Draw ``(x, y, in_c)``; the first ``b n`` rows form the ``beta_c`` population."""
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(self.n)
        in_c = np.arange(self.n) < self.n_c
        noise = np.where(in_c, self.sigma_c, self.sigma_star) * rng.standard_normal(self.n)
        y = np.where(in_c, self.beta_c, self.beta_star) * x + noise
        return x, y, in_c

    def predicted_minima(self, lam):
        """Expected locations of the two minima at penalty ``lam``."""
        lam = np.asarray(lam, dtype=float)
        m_c, m_s = self.n_c, self.n - self.n_c
        return (self.beta_c - lam * self.n / (m_c - 2),
                self.beta_star - lam * self.n / (m_s - 2))

    def branch_standard_errors(self, lam):
        """Standard deviation of each minimum's location over draws of the data.

        For ``m`` observations with unit-variance predictors, the slope
        ``(sum x y - n lam) / sum x^2`` has variance
        ``(sigma^2 + 2 n^2 lam^2 / ((m - 2)(m - 4))) / (m - 2)``.
        """
        lam = np.asarray(lam, dtype=float)

        def se(m, sigma):
            return np.sqrt((sigma ** 2 + 2 * self.n ** 2 * lam ** 2 / ((m - 2) * (m - 4))) / (m - 2))

        return se(self.n_c, self.sigma_c), se(self.n - self.n_c, self.sigma_star)


def univariate_objective(beta, x, y, lam, scenario: UnivariateScenario):
    """Penalized M-objective ``0.5 mean(rho(r / s) / rho_sup) + lam |beta|`` at each ``beta``."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    f, s = scenario.rho, scenario.scale
    r = (y[None, :] - beta[:, None] * x[None, :]) / s
    return 0.5 * f.rho(r).mean(axis=1) / f.normalizer + lam * np.abs(beta)


def _smooth_slope(beta, x, y, scenario):
    # derivative of the loss part; the penalty adds lam * sign(beta)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    f, s = scenario.rho, scenario.scale
    r = (y[None, :] - beta[:, None] * x[None, :]) / s
    return -0.5 * (f.psi(r) * x[None, :]).mean(axis=1) / (s * f.normalizer)


class Minimum1D(NamedTuple):
    location: float
    objective: float


def enumerate_univariate_minima(scenario: UnivariateScenario, x, y, lam, n_grid=20_000,
                                margin=None, tol=1e-8) -> List[Minimum1D]:
    """All local minima of the univariate objective at ``lam``.

    The derivative is evaluated on ``n_grid`` points spanning the two slopes
    and zero plus a margin; each change of sign from negative to positive is
    refined by bisection to ``tol``.  The kink at 0 is a minimum whenever the
    loss slope there is within ``lam`` of zero.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    anchors = np.array([0.0, scenario.beta_c, scenario.beta_star])
    if margin is None:
        margin = 0.1 * np.ptp(anchors) + 1.0
    grid = np.linspace(anchors.min() - margin, anchors.max() + margin, n_grid)
    grid = np.union1d(grid, [0.0])

    def slope(b):
        return _smooth_slope(b, x, y, scenario) + lam * np.sign(b)

    g = slope(grid)
    found = []
    for i in np.flatnonzero((g[:-1] < 0) & (g[1:] > 0)):
        lo, hi = grid[i], grid[i + 1]
        if lo < 0 < hi:
            continue
        if lo == 0.0 or hi == 0.0:
            continue
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if slope(mid)[0] < 0:
                lo = mid
            else:
                hi = mid
        found.append(0.5 * (lo + hi))
    if abs(_smooth_slope(0.0, x, y, scenario)[0]) <= lam:
        found.append(0.0)
    found = np.sort(found)
    objs = univariate_objective(found, x, y, lam, scenario) if found.size else []
    return [Minimum1D(float(b), float(o)) for b, o in zip(found, objs)]


class Discontinuity(NamedTuple):
    index: int
    lam: float
    jump: float


def detect_discontinuities(trace, lambdas, rel_threshold=10.0) -> List[Discontinuity]:
    """Adjacent-grid jumps larger than ``rel_threshold`` times the median jump.

    ``index`` is the grid position after the jump.  Non-finite entries break
    the trace and are skipped.
    """
    trace = np.asarray(trace, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    if trace.shape != lambdas.shape:
        raise ValueError("trace and lambda grid must align")
    jumps = np.abs(np.diff(trace))
    ok = np.isfinite(jumps)
    if not ok.any():
        return []
    med = np.median(jumps[ok])
    out = []
    for t in np.flatnonzero(ok):
        if jumps[t] > rel_threshold * med and jumps[t] > 0:
            out.append(Discontinuity(int(t + 1), float(lambdas[t + 1]), float(jumps[t])))
    return out


def total_variation(trace) -> float:
    """Sum of absolute differences between consecutive finite entries."""
    trace = np.asarray(trace, dtype=float)
    trace = trace[np.isfinite(trace)]
    return float(np.abs(np.diff(trace)).sum()) if trace.size > 1 else 0.0


@dataclass(eq=False)
class PathReport:
    lambdas: np.ndarray
    minima: List[List[Minimum1D]]
    global_trace: np.ndarray
    discontinuities: List[Discontinuity]

    def fig_rows(self):
        """``(lambda, location, objective, is_global)`` for every minimum."""
        rows = []
        for lam, mins, g in zip(self.lambdas, self.minima, self.global_trace):
            for m in mins:
                rows.append((float(lam), m.location, m.objective, bool(m.location == g)))
        return rows


def path_report(scenario: UnivariateScenario, x, y, rel_threshold=10.0, **enum_opts) -> PathReport:
    """Enumerate minima along the scenario's grid and locate jumps of the global minimum."""
    lambdas = scenario.lambda_grid
    minima, glob = [], []
    for lam in lambdas:
        mins = enumerate_univariate_minima(scenario, x, y, lam, **enum_opts)
        minima.append(mins)
        glob.append(min(mins, key=lambda m: m.objective).location if mins else np.nan)
    glob = np.array(glob)
    return PathReport(lambdas, minima, glob, detect_discontinuities(glob, lambdas, rel_threshold))


def univariate_registry(scenario: UnivariateScenario, x, y, M, **path_opts) -> MinimaRegistry:
    """Multi-minimum path of the scenario computed by the general optimizer."""
    path_opts.setdefault("n_subsets", 10)
    return compute_path(np.asarray(x, dtype=float).reshape(-1, 1), y, scenario.loss(), 1.0,
                        scenario.lambda_grid, M=M, fit_intercept=False, **path_opts)


def branch_traces(registry: MinimaRegistry, anchors: Sequence[float]) -> np.ndarray:
    """Per anchor, the slope of the retained minimum closest to it at each lambda."""
    out = np.full((len(anchors), len(registry)), np.nan)
    for t in range(len(registry)):
        slopes = np.array([m.beta[0] for m in registry[t]])
        if slopes.size == 0:
            continue
        for a, anchor in enumerate(anchors):
            out[a, t] = slopes[np.argmin(np.abs(slopes - anchor))]
    return out
