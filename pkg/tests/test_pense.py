import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pensecv.diagnostics import UnivariateScenario
from pensecv.enet import PenaltySpec, weighted_en_solve
from pensecv.exceptions import AlphaZero
from pensecv.pense import (LossSpec, Start, adaptive_loadings, compute_path, generate_starts,
                           intercept_only_fit, lambda_grid, local_optimize, merge_minima,
                           objective, robust_lambda_max)
from pensecv.rho import MScaleSpec, RhoFunction, m_scale

# rho(x) = x^2 with unit scale: the M-loss is (1/2n) sum r^2
SQUARE_LOSS = LossSpec.m_loss(1.0, RhoFunction("square", 1.0))


def contaminated(seed, n=60, p=8, frac=0.2):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:3] = [2.0, -1.5, 1.0]
    y = 1.0 + x @ beta + 0.5 * rng.standard_normal(n)
    bad = rng.choice(n, int(frac * n), replace=False)
    y[bad] += rng.normal(15, 2, bad.size)
    x[bad[:3], 4] += 6
    return x, y


class TestLossSpec:
    def test_kinds(self):
        assert LossSpec.s_loss(0.3).delta == 0.3
        with pytest.raises(ValueError):
            LossSpec("m-loss")
        with pytest.raises(ValueError):
            LossSpec("s-loss", fixed_scale=1.0)
        with pytest.raises(ValueError):
            LossSpec("t-loss")


class TestLocalOptimize:
    def test_objective_recomputed_from_fields(self):
        x, y = contaminated(0)
        loss = LossSpec.s_loss(0.25)
        pen = PenaltySpec(0.05, 0.5)
        m = local_optimize(x, y, loss, pen)
        r = y - m.intercept - x @ m.beta
        sigma = m_scale(r, loss.rho, MScaleSpec(0.25))
        by_hand = 0.5 * sigma ** 2 + pen.value(m.beta)
        # two independent scale solves, each accurate to the M-scale tolerance
        assert m.objective == pytest.approx(by_hand, rel=1e-8)
        assert m.objective == pytest.approx(objective(x, y, loss, pen, m.intercept, m.beta)[0],
                                            rel=1e-8)
        assert m.scale == pytest.approx(sigma, rel=1e-8)

    def test_fixed_point_idempotence(self):
        x, y = contaminated(1)
        loss, pen = LossSpec.s_loss(0.25), PenaltySpec(0.05, 0.5)
        m = local_optimize(x, y, loss, pen)
        again = local_optimize(x, y, loss, pen, start=m)
        assert again.iterations <= 1
        np.testing.assert_allclose(again.coefficients, m.coefficients, atol=1e-7)

    def test_stationary_for_own_weighted_problem(self):
        x, y = contaminated(2)
        loss, pen = LossSpec.s_loss(0.25), PenaltySpec(0.05, 0.8)
        m = local_optimize(x, y, loss, pen, tol=1e-12)
        # the S-loss recast: weighted LS with lambda scaled by sum(w r~^2) / sum(w)
        w = m.weights.weights
        u = (y - m.intercept - x @ m.beta) / m.scale
        lam = pen.lam * np.sum(w * u * u) / np.sum(w)
        ref = weighted_en_solve(x, y, PenaltySpec(lam, 0.8), w, warm_start=m.beta, tol=1e-12)
        np.testing.assert_allclose(ref.beta, m.beta, atol=1e-5 * (1 + np.abs(m.beta).max()))

    def test_convex_limit_matches_en_solver(self):
        x, y = contaminated(3)
        pen = PenaltySpec(0.1, 1.0)
        m = local_optimize(x, y, SQUARE_LOSS, pen)
        ref = weighted_en_solve(x, y, pen, tol=1e-12)
        np.testing.assert_allclose(m.beta, ref.beta, atol=1e-6)
        assert m.intercept == pytest.approx(ref.intercept, abs=1e-6)

    def test_outer_descent(self):
        x, y = contaminated(4, n=80, p=15, frac=0.3)
        loss, pen = LossSpec.s_loss(0.4), PenaltySpec(0.02, 0.5)
        start = np.random.default_rng(0).standard_normal(15)
        obj = [local_optimize(x, y, loss, pen, start=start, max_iterations=k).objective
               for k in range(1, 25)]
        slack = 1e-12 * (1 + np.abs(obj[:-1]))
        assert np.all(np.diff(obj) <= slack)

    def test_wrong_start_dimension(self):
        x, y = contaminated(0)
        with pytest.raises(ValueError):
            local_optimize(x, y, LossSpec.s_loss(), PenaltySpec(0.1), start=np.zeros(3))

    @pytest.mark.parametrize("near, lam", [(100.0, 0.001), (0.5, 0.001), (100.0, 0.003),
                                           (0.5, 0.003)])
    def test_univariate_basins(self, near, lam):
        sc = UnivariateScenario()
        x, y, _ = sc.generate(0)
        m = local_optimize(x.reshape(-1, 1), y, sc.loss(), PenaltySpec(lam, 1.0),
                           start=Start(np.array([near]), 0.0, "user"), fit_intercept=False)
        pred_c, pred_s = sc.predicted_minima(lam)
        se_c, se_s = sc.branch_standard_errors(lam)
        pred, se = (pred_s, se_s) if near > 50 else (pred_c, se_c)
        assert abs(m.beta[0] - pred) < 3 * se


class TestStarts:
    def test_base_starts(self):
        x, y = contaminated(0)
        pen = PenaltySpec(0.1, 0.5)
        starts = generate_starts(x, y, LossSpec.s_loss(), pen, n_subsets=0)
        assert len(starts) == 2
        assert np.all(starts[0].beta == 0)
        np.testing.assert_allclose(starts[1].beta, weighted_en_solve(x, y, pen).beta)

    def test_deterministic(self):
        x, y = contaminated(0)
        a = generate_starts(x, y, LossSpec.s_loss(), PenaltySpec(0.1), 8, seed=5)
        b = generate_starts(x, y, LossSpec.s_loss(), PenaltySpec(0.1), 8, seed=5)
        for s, t in zip(a, b):
            np.testing.assert_array_equal(s.beta, t.beta)

    def test_some_start_near_least_squares(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((100, 10))
        y = x @ rng.standard_normal(10) + rng.standard_normal(100)
        ls = np.linalg.lstsq(np.column_stack([np.ones(100), x]), y, rcond=None)[0][1:]
        pen = PenaltySpec(1e-3 * robust_lambda_max(x, y, LossSpec.s_loss(), 1.0), 1.0)
        starts = generate_starts(x, y, LossSpec.s_loss(), pen, n_subsets=50, seed=1)
        dist = [np.linalg.norm(s.beta - ls) for s in starts[2:]]
        assert min(dist) < 1.0


class TestPath:
    def test_registry_invariants(self):
        x, y = contaminated(5, n=50, p=6, frac=0.3)
        loss = LossSpec.s_loss(0.4)
        grid = lambda_grid(x, y, loss, 0.5, q=8, min_ratio=0.05)
        reg = compute_path(x, y, loss, 0.5, grid, M=6, n_subsets=15)
        assert np.all(np.diff(reg.lambdas) < 0)
        for t in range(len(reg)):
            mins = reg[t]
            assert 1 <= len(mins) <= 6
            obj = [m.objective for m in mins]
            assert obj == sorted(obj)
            for i in range(len(mins)):
                for j in range(i + 1, len(mins)):
                    a, b = mins[i], mins[j]
                    d = np.linalg.norm(a.coefficients - b.coefficients)
                    assert d / (1 + np.linalg.norm(a.coefficients)) > reg.dedup_tol
                # zero-weight cap of the S-estimator
                assert mins[i].n_zero_weights <= int(0.4 * 50)
        best = reg.global_path()
        assert [m.lam for m in best] == list(reg.lambdas)

    def test_entries_are_stationary(self):
        x, y = contaminated(6, n=50, p=6, frac=0.3)
        loss = LossSpec.s_loss(0.4)
        grid = lambda_grid(x, y, loss, 0.5, q=5, min_ratio=0.05)
        reg = compute_path(x, y, loss, 0.5, grid, M=4, n_subsets=10)
        for t in range(len(reg)):
            pen = PenaltySpec(reg.lambdas[t], 0.5)
            for m in reg[t]:
                again = local_optimize(x, y, loss, pen, start=m)
                d = np.linalg.norm(again.coefficients - m.coefficients)
                assert d / (1 + np.linalg.norm(m.coefficients)) < reg.dedup_tol

    def test_minima_persist_between_close_lambdas(self):
        # distances over (intercept, beta), as in the registry's deduplication
        x, y = contaminated(7, n=60, p=6, frac=0.25)
        loss = LossSpec.s_loss(0.4)
        lmax = robust_lambda_max(x, y, loss, 0.5)
        grid = lmax * 0.96 ** np.arange(25)
        reg = compute_path(x, y, loss, 0.5, grid, M=5, n_subsets=10)
        for t in range(len(reg) - 1):
            if len(reg[t + 1]) == reg.M:
                continue  # a full registry may legitimately drop a minimum
            following = [m.coefficients for m in reg[t + 1]]
            for m in reg[t]:
                gap = min(np.linalg.norm(m.coefficients - c) for c in following)
                assert gap <= 0.5 * np.linalg.norm(m.coefficients)

    def test_convex_path_single_minimum(self):
        from sklearn.linear_model import Lasso
        rng = np.random.default_rng(0)
        x = rng.standard_normal((50, 10))
        y = x @ rng.standard_normal(10) + rng.standard_normal(50)
        grid = np.geomspace(1.0, 0.01, 8)
        reg = compute_path(x, y, SQUARE_LOSS, 1.0, grid, M=5, n_subsets=5)
        assert np.all(reg.counts() == 1)
        for lam, mins in zip(grid, reg.minima):
            ref = Lasso(alpha=lam, tol=1e-12, max_iter=1_000_000).fit(x, y)
            np.testing.assert_allclose(mins[0].beta, ref.coef_, atol=1e-6)

    def test_univariate_single_minimum_jumps(self):
        sc = UnivariateScenario()
        x, y, _ = sc.generate(0)
        reg = compute_path(x.reshape(-1, 1), y, sc.loss(), 1.0, sc.lambda_grid, M=1,
                           fit_intercept=False)
        trace = np.array([m[0].beta[0] for m in reg.minima])
        assert np.max(np.abs(np.diff(trace))) == pytest.approx(99.5, abs=1.0)

    def test_univariate_two_minima_are_continuous(self):
        sc = UnivariateScenario()
        x, y, _ = sc.generate(0)
        reg = compute_path(x.reshape(-1, 1), y, sc.loss(), 1.0, sc.lambda_grid, M=2,
                           fit_intercept=False)
        step = abs(sc.lambda_grid[1] - sc.lambda_grid[0]) * sc.n / (sc.n_c - 2)
        for anchor in (sc.beta_c, sc.beta_star):
            tr = np.array([min((m.beta[0] for m in mins), key=lambda b: abs(b - anchor))
                           for mins in reg.minima])
            assert np.max(np.abs(np.diff(tr))) < 10 * step

    def test_failed_start_is_dropped(self):
        x, y = contaminated(0)
        loss = LossSpec.s_loss()
        bad = [np.full(x.shape[1], np.nan)]
        reg = compute_path(x, y, loss, 0.5, [0.5, 0.2], M=3, starts=bad, n_subsets=2)
        assert all(np.isfinite(m.objective) for mins in reg.minima for m in mins)
        assert reg.counts().min() >= 1

    def test_callable_starts_used_at_every_lambda(self):
        x, y = contaminated(0)
        seen = []

        def starts(pen):
            seen.append(pen.lam)
            return [Start(np.zeros(x.shape[1]), None, "user")]

        compute_path(x, y, LossSpec.s_loss(), 0.5, [0.5, 0.3, 0.2], M=2, starts=starts,
                     n_subsets=1)
        assert seen == [0.5, 0.3, 0.2]

    def test_rejects_bad_grid(self):
        x, y = contaminated(0)
        with pytest.raises(ValueError):
            compute_path(x, y, LossSpec.s_loss(), 0.5, [0.1, 0.2])
        with pytest.raises(ValueError):
            compute_path(x, y, LossSpec.s_loss(), 0.5, [0.2, 0.1], M=0)


class TestGrid:
    def test_lambda_max_gives_empty_model(self):
        x, y = contaminated(8)
        loss = LossSpec.s_loss(0.25)
        lmax = robust_lambda_max(x, y, loss, 0.5)
        m = local_optimize(x, y, loss, PenaltySpec(1.01 * lmax, 0.5))
        assert m.nnz == 0
        base = intercept_only_fit(x, y, loss)
        assert m.objective == pytest.approx(base.objective, rel=1e-8)

    def test_grid_shape(self):
        x, y = contaminated(8)
        g = lambda_grid(x, y, LossSpec.s_loss(), 0.5, q=10, min_ratio=1e-2)
        assert g.size == 10 and np.all(np.diff(g) < 0)
        assert g[-1] / g[0] == pytest.approx(1e-2)

    def test_alpha_zero(self):
        x, y = contaminated(8)
        with pytest.raises(AlphaZero):
            robust_lambda_max(x, y, LossSpec.s_loss(), 0.0)


class TestAdaptiveLoadings:
    def test_equal_pilot(self):
        np.testing.assert_allclose(adaptive_loadings(np.full(4, 0.7)), np.full(4, 1 / 0.7),
                                   rtol=1e-5)

    def test_tiny_pilot_stays_finite(self):
        ld = adaptive_loadings(np.array([0.0, 1e-200]), exponent=3.0)
        assert np.all(np.isfinite(ld)) and np.all(ld > 0)

    def test_zero_pilot_uniform(self):
        ld = adaptive_loadings(np.zeros(5), exponent=2.0)
        np.testing.assert_allclose(ld, np.full(5, 1e12))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.one_of(st.just(0.0), st.floats(1e-3, 1e3), st.floats(-1e3, -1e-3)),
                    min_size=2, max_size=20),
           st.floats(0.1, 3.0))
    def test_monotone_and_positive(self, beta, exponent):
        beta = np.array(beta)
        ld = adaptive_loadings(beta, exponent)
        assert np.all(np.isfinite(ld)) and np.all(ld > 0)
        a = np.abs(beta)
        order = np.argsort(a)
        strictly = np.diff(a[order]) > 0
        assert np.all(np.diff(ld[order])[strictly] < 0)


def test_merge_minima_keeps_best_of_duplicates():
    x, y = contaminated(0)
    loss, pen = LossSpec.s_loss(), PenaltySpec(0.1, 0.5)
    m = local_optimize(x, y, loss, pen)
    near = local_optimize(x, y, loss, pen, start=m.beta + 1e-9)
    kept = merge_minima([near, m], M=5, dedup_tol=1e-4)
    assert len(kept) == 1
    assert kept[0].objective == min(m.objective, near.objective)
