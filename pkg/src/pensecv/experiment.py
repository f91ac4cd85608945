"""Side-by-side runs of naive CV and RIS-CV on simulated data.

One call of :func:`compare_engines` simulates a contaminated data set, fits
both pipelines on the robustly standardized data, selects a penalty level with
each, and scores the two selected fits on a large clean test sample.
"""

import time
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .cv import CvOutcome, Selection, naive_cv, ris_cv, select_lambda
from .diagnostics import total_variation
from .pense import LocalMinimum, LossSpec, MinimaRegistry, compute_path, lambda_grid
from .simulation import SimulationConfig, gen_test, simulate, true_prediction_error
from .standardize import Standardization


@dataclass(frozen=True)
class ComparisonSettings:
    """Estimator and CV settings shared by both engines.

    ``start_every=1`` regenerates the random-subset starts at every lambda
    (for both the full-data fits and the naive-CV fold fits); the
    ``explore_*`` pair screens those starts with a few IRWLS iterations.
    """

    K: int = 7
    R: int = 5
    M: int = 40
    delta: float = 0.4
    alpha: float = 0.5
    q: int = 12
    min_ratio: float = 0.01
    n_subsets: int = 50
    start_every: int = 1
    explore_iterations: int = 5
    explore_keep: int = 10
    rule: str = "one-se"
    metric: str = "tau"
    c_tau: float = 3.0
    n_test: int = 10_000

    def path_options(self, seed) -> dict:
        return dict(n_subsets=self.n_subsets, seed=seed, start_every=self.start_every,
                    explore_iterations=self.explore_iterations, explore_keep=self.explore_keep)


@dataclass(eq=False)
class EngineRun:
    outcome: CvOutcome
    selection: Selection
    selected: LocalMinimum
    prediction_error: float
    seconds: dict

    @property
    def total_seconds(self) -> float:
        return sum(self.seconds.values())

    @property
    def total_variation(self) -> float:
        return total_variation(self.outcome.curve)


@dataclass(eq=False)
class Comparison:
    seed: int
    lambdas: np.ndarray
    ris: EngineRun
    naive: EngineRun
    zero_weight_cap: int
    # largest number of zero weights over every S-loss minimum seen, with
    # the number of minima exceeding the cap (full data and CV folds)
    max_zero_weights: int
    cap_violations: int
    registry_counts: List[int] = field(default_factory=list)

    @property
    def error_difference(self) -> float:
        """RIS minus naive true prediction error; negative favors RIS-CV."""
        return self.ris.prediction_error - self.naive.prediction_error


def _registry_zero_weights(reg: MinimaRegistry, cap):
    counts = [m.n_zero_weights for level in reg.minima for m in level]
    return max(counts, default=0), sum(c > cap for c in counts)


def compare_engines(sim: SimulationConfig, settings: ComparisonSettings = ComparisonSettings(),
                    n_jobs=1) -> Comparison:
    """Simulate, run both engines, and score their 1-SE (or ``rule``) selections."""
    ds = simulate(sim)
    std = Standardization.fit(ds.design, ds.response)
    xs, ys = std.transform(ds.design, ds.response)
    n = ys.size
    loss = LossSpec.s_loss(settings.delta)
    cap = int(np.floor(settings.delta * n + 1e-9))
    lambdas = lambda_grid(xs, ys, loss, settings.alpha, settings.q, settings.min_ratio)
    opts = settings.path_options(sim.rng_seed)
    x_test, y_test = gen_test(sim, settings.n_test, error_scale=ds.true_error_scale)

    def score(m: LocalMinimum):
        b0, beta = std.back_transform(m.intercept, m.beta, ds.p)
        return true_prediction_error(b0 + x_test @ beta, y_test, ds.true_error_scale,
                                     sim.error_family)

    t0 = time.perf_counter()
    reg_many = compute_path(xs, ys, loss, settings.alpha, lambdas, M=settings.M, **opts)
    t1 = time.perf_counter()
    ris = ris_cv(reg_many, xs, ys, loss, settings.alpha, K=settings.K, R=settings.R,
                 seed=sim.rng_seed, n_jobs=n_jobs)
    t2 = time.perf_counter()
    reg_one = compute_path(xs, ys, loss, settings.alpha, lambdas, M=1, **opts)
    t3 = time.perf_counter()
    fold_opts = {k: v for k, v in opts.items() if k != "seed"}
    naive = naive_cv(reg_one, xs, ys, loss, settings.alpha, K=settings.K, R=settings.R,
                     metric=settings.metric, seed=sim.rng_seed, c_tau=settings.c_tau,
                     n_jobs=n_jobs, **fold_opts)
    t4 = time.perf_counter()

    sel_r = select_lambda(ris, settings.rule)
    sel_n = select_lambda(naive, settings.rule)
    fit_r = reg_many[sel_r.index][sel_r.q]
    fit_n = reg_one[sel_n.index][0]
    runs = (EngineRun(ris, sel_r, fit_r, score(fit_r), {"path": t1 - t0, "cv": t2 - t1}),
            EngineRun(naive, sel_n, fit_n, score(fit_n), {"path": t3 - t2, "cv": t4 - t3}))

    worst, violations = 0, 0
    for reg in (reg_many, reg_one):
        w, v = _registry_zero_weights(reg, cap)
        worst, violations = max(worst, w), violations + v
    for out in (ris, naive):
        worst = max(worst, out.diagnostics["max_zero_weights"])
        violations += out.diagnostics["zero_weight_violations"]
    return Comparison(sim.rng_seed, lambdas, *runs, cap, worst, violations,
                      reg_many.counts().tolist())
