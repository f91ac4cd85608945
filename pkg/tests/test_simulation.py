import numpy as np
import pytest
from dataclasses import replace

from pensecv.metrics import metric_tau
from pensecv.simulation import (SimulationConfig, apply_contamination, apply_leverage,
                                contamination_blocks, gen_clean, gen_test, sample_errors,
                                simulate, true_prediction_error)


def hill(sample, k):
    a = np.sort(np.abs(sample))[::-1]
    return 1.0 / np.mean(np.log(a[:k] / a[k]))


def mahalanobis(x, cov):
    return np.sqrt(np.sum(x * np.linalg.solve(cov, x.T).T, axis=1))


class TestClean:
    def test_ar1_correlation(self):
        cfg = SimulationConfig(n=100_000, p=6, error_family="gaussian", rng_seed=1)
        x = gen_clean(cfg).design
        for j in range(5):
            assert np.corrcoef(x[:, j], x[:, j + 1])[0, 1] == pytest.approx(0.5, abs=0.02)

    def test_beta_true(self):
        ds = gen_clean(SimulationConfig(n=200, p=30))
        assert ds.beta_true[:5].tolist() == [1.0] * 5  # floor(log 200) = 5
        assert np.all(ds.beta_true[5:] == 0)

    @pytest.mark.parametrize("family", ["gaussian", "laplace", "stable_1_5"])
    def test_snr_calibration_out_of_sample(self, family):
        cfg = SimulationConfig(n=100_000, p=10, error_family=family, snr=2.0, rng_seed=3)
        ds = gen_clean(cfg)
        x, y = gen_test(cfg, 100_000, seed=17, error_scale=ds.true_error_scale)
        signal = x @ ds.beta_true
        noise = y - signal
        spread = np.std(noise, ddof=1) if family == "gaussian" else metric_tau(noise)
        assert np.std(signal, ddof=1) / spread == pytest.approx(np.sqrt(2.0), rel=0.05)

    def test_stable_median_and_tail(self):
        e = sample_errors("stable_1_5", 100_000, np.random.default_rng(0))
        assert abs(np.median(e)) < 0.02
        assert 1.3 <= hill(e, 1000) <= 1.7

    def test_deterministic(self):
        cfg = SimulationConfig(rng_seed=9)
        a, b = simulate(cfg), simulate(cfg)
        np.testing.assert_array_equal(a.design, b.design)
        np.testing.assert_array_equal(a.response, b.response)
        assert a.true_error_scale == b.true_error_scale


class TestLeverage:
    def test_entries_exactly_eight_times(self):
        cfg = SimulationConfig(rng_seed=2)
        clean = gen_clean(cfg)
        lev = apply_leverage(clean, cfg)
        s = cfg.n_active
        assert lev.leverage_rows.size == 20
        np.testing.assert_array_equal(lev.design[:, :s], clean.design[:, :s])
        np.testing.assert_array_equal(lev.response, clean.response)
        n_cols = (cfg.p - s) // 2
        for i in lev.leverage_rows:
            changed = np.flatnonzero(lev.design[i] != clean.design[i])
            assert changed.size == n_cols
            np.testing.assert_array_equal(lev.design[i, changed], 8 * clean.design[i, changed])
            # the changed entries are the largest in magnitude among inactive columns
            rest = np.setdiff1d(np.arange(s, cfg.p), changed)
            assert np.abs(clean.design[i, changed]).min() >= np.abs(clean.design[i, rest]).max()
        untouched = np.setdiff1d(np.arange(cfg.n), lev.leverage_rows)
        np.testing.assert_array_equal(lev.design[untouched], clean.design[untouched])

    def test_avoids_contamination_blocks(self):
        cfg = SimulationConfig(rng_seed=4)
        ds = simulate(cfg)
        assert np.intersect1d(ds.leverage_rows, np.arange(30)).size == 0


class TestContamination:
    def test_blocks(self):
        ds = simulate(SimulationConfig(rng_seed=0))
        assert [r.tolist() for r in ds.contaminated_rows] == [list(range(l * 10, l * 10 + 10))
                                                              for l in range(3)]
        assert ds.clean_mask().sum() == 70

    def test_columns(self):
        cfg = SimulationConfig(rng_seed=5)
        ds = simulate(cfg)
        for cols in ds.contamination_columns:
            assert cols.size == int(np.floor(np.log2(cfg.p)))
            assert cols.min() >= cfg.n_active
            assert np.unique(cols).size == cols.size

    @pytest.mark.parametrize("seed", range(5))
    def test_twice_as_far(self, seed):
        cfg = SimulationConfig(rng_seed=seed)
        ds = simulate(cfg)
        d = mahalanobis(ds.design, cfg.covariance())
        clean = ds.clean_mask()
        assert d[~clean].min() >= 2 * d[clean].max()

    def test_multiplier_is_smallest(self):
        cfg = SimulationConfig(rng_seed=6)
        before = apply_leverage(gen_clean(cfg), cfg)
        ds = apply_contamination(before, cfg)
        cov = cfg.covariance()
        clean = ds.clean_mask()
        target = 2 * mahalanobis(ds.design[clean], cov).max()
        for rows, cols, k in zip(ds.contaminated_rows, ds.contamination_columns,
                                 ds.leverage_multipliers):
            x = before.design[rows].copy()
            x[:, cols] *= 0.999 * k
            if k > 1:
                assert mahalanobis(x, cov).min() < target

    def test_block_slopes(self):
        cfg = SimulationConfig(n=3000, p=50, rng_seed=7)
        ds = simulate(cfg)
        for rows, cols, u in zip(ds.contaminated_rows, ds.contamination_columns,
                                 cfg.signal_values):
            xb, yb = ds.design[np.ix_(rows, cols)], ds.response[rows]
            coef, rss = np.linalg.lstsq(xb, yb, rcond=None)[:2]
            sigma2 = rss[0] / (rows.size - cols.size)
            se = np.sqrt(sigma2 * np.diag(np.linalg.inv(xb.T @ xb)))
            assert np.all(np.abs(coef - u) < 4 * se)
            assert np.all(se < 0.1 * abs(u))

    def test_no_contamination(self):
        cfg = SimulationConfig(contamination_fraction=0.0, rng_seed=1)
        ds = simulate(cfg)
        assert ds.contaminated_rows == ()
        assert contamination_blocks(cfg) == ()


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(contamination_fraction=0.5)
    with pytest.raises(ValueError):
        SimulationConfig(error_family="cauchy")
    with pytest.raises(ValueError):
        SimulationConfig(snr=0.0)


def test_true_prediction_error_of_truth_is_near_one():
    cfg = SimulationConfig(error_family="gaussian", rng_seed=2)
    ds = gen_clean(cfg)
    x, y = gen_test(cfg, 10_000, error_scale=ds.true_error_scale)
    err = true_prediction_error(x @ ds.beta_true, y, ds.true_error_scale, "gaussian")
    assert err == pytest.approx(1.0, abs=0.03)
    worse = true_prediction_error(np.zeros_like(y), y, ds.true_error_scale, "gaussian")
    assert worse > err


def test_test_draw_independent_of_training():
    cfg = SimulationConfig(rng_seed=3)
    x, _ = gen_test(cfg, 100)
    assert not np.allclose(x, simulate(cfg).design[:100])
    x2, _ = gen_test(replace(cfg, rng_seed=4), 100)
    assert not np.allclose(x, x2)
