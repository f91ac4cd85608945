import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, stats

from pensecv.exceptions import DegenerateResiduals
from pensecv.rho import (MScaleSpec, RhoFunction, calibrate_cutoff, m_scale, psi_eval,
                         rho_eval, robustness_weights, weight_eval)

# cutoffs solving E[rho(Z) / rho_sup] = delta, from scipy quad + brentq on
# the closed-form bisquare (see _oracle_cutoff below)
BISQUARE_CUTOFFS = {0.5: 1.547644980928226, 0.4: 1.9879654472415353,
                    0.25: 2.9370145551424547, 0.1: 5.182360597413501}

FAMILIES = [calibrate_cutoff("bisquare", 0.5), calibrate_cutoff("lqq", 0.5),
            calibrate_cutoff("hampel", 0.5)]


def bisquare_scalar(x, c):
    # written out independently of the kernels
    if abs(x) >= c:
        return c * c / 6.0
    u = x / c
    return c * c / 6.0 * (1.0 - (1.0 - u * u) ** 3)


def _oracle_cutoff(delta):
    def expected(c):
        f = lambda z: bisquare_scalar(z, c) / (c * c / 6.0) * stats.norm.pdf(z)
        return 2 * (integrate.quad(f, 0, c, epsabs=1e-14)[0] + stats.norm.sf(c))
    return optimize.brentq(lambda c: expected(c) - delta, 0.1, 30, xtol=1e-14)


class TestRhoFunctions:
    def test_bisquare_closed_form(self):
        f = RhoFunction("bisquare", 1.5476)
        assert rho_eval(f, 0.0) == 0.0
        assert rho_eval(f, 2 * 1.5476) == pytest.approx(1.5476 ** 2 / 6, rel=1e-14)
        assert rho_eval(f, 1.0) == pytest.approx(bisquare_scalar(1.0, 1.5476), rel=1e-13)
        xs = np.linspace(-3, 3, 61)
        np.testing.assert_allclose(f.rho(xs), [bisquare_scalar(x, 1.5476) for x in xs],
                                   rtol=1e-12, atol=1e-15)

    @pytest.mark.parametrize("f", FAMILIES, ids=lambda f: f.kind)
    def test_shape_invariants(self, f):
        x = np.linspace(0, 3 * f.flat_cutoff, 2001)
        r = f.rho(x)
        assert r[0] == 0
        np.testing.assert_array_equal(f.rho(-x), r)
        assert np.all(np.diff(r) >= -1e-15)
        beyond = x >= f.flat_cutoff
        np.testing.assert_allclose(r[beyond], f.rho_sup, rtol=1e-12)
        assert np.all(f.psi(x[beyond]) == 0)
        assert f.psi(0.0) == 0
        assert weight_eval(f, 0.0) == pytest.approx(f.psi_prime(0.0))
        assert f.psi_prime(0.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("f", FAMILIES, ids=lambda f: f.kind)
    def test_weight_continuous_at_zero(self, f):
        assert weight_eval(f, 1e-9) == pytest.approx(weight_eval(f, 0.0), rel=1e-6)

    @pytest.mark.parametrize("f", FAMILIES, ids=lambda f: f.kind)
    def test_derivatives_match_finite_differences(self, f):
        rng = np.random.default_rng(1)
        x = rng.uniform(-f.flat_cutoff, f.flat_cutoff, 100)
        h = 1e-6
        np.testing.assert_allclose((f.rho(x + h) - f.rho(x - h)) / (2 * h), psi_eval(f, x),
                                   atol=1e-6)
        # psi' jumps at the LQQ / Hampel breakpoints, so stay clear of them
        knots = np.array([0.0] + list(f.params[:3]) + [f.flat_cutoff])
        x = x[np.min(np.abs(np.abs(x)[:, None] - knots[None, :]), axis=1) > 1e-4]
        np.testing.assert_allclose((f.psi(x + h) - f.psi(x - h)) / (2 * h), f.psi_prime(x),
                                   atol=1e-6)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            RhoFunction("huber", 1.0)


class TestCalibration:
    @pytest.mark.parametrize("delta", sorted(BISQUARE_CUTOFFS))
    def test_bisquare_matches_quadrature_oracle(self, delta):
        assert calibrate_cutoff("bisquare", delta).cutoff == pytest.approx(
            BISQUARE_CUTOFFS[delta], abs=1e-9)

    def test_oracle_reproduces_frozen_value(self):
        assert _oracle_cutoff(0.25) == pytest.approx(BISQUARE_CUTOFFS[0.25], abs=1e-10)

    def test_published_constant(self):
        assert calibrate_cutoff("bisquare", 0.5).cutoff == pytest.approx(1.5476, abs=1e-4)

    @pytest.mark.parametrize("kind", ["bisquare", "lqq", "hampel"])
    def test_monotone_in_delta(self, kind):
        c = [calibrate_cutoff(kind, d).cutoff for d in (0.1, 0.25, 0.5)]
        assert c[0] > c[1] > c[2]

    @pytest.mark.parametrize("kind", ["lqq", "hampel"])
    def test_consistency_at_normal(self, kind):
        f = calibrate_cutoff(kind, 0.4)
        val = integrate.quad(lambda z: f.rho_normalized(z) * stats.norm.pdf(z),
                             -f.flat_cutoff, f.flat_cutoff, limit=200)[0]
        val += 2 * stats.norm.sf(f.flat_cutoff)
        assert val == pytest.approx(0.4, abs=1e-9)

    def test_rejects_bad_delta(self):
        with pytest.raises(ValueError):
            calibrate_cutoff("bisquare", 0.7)


class TestMScale:
    def test_constant_residuals(self):
        f = calibrate_cutoff("bisquare", 0.5)
        k, delta = 2.5, 0.5
        # rho(k / s) / rho_sup = delta  =>  s = k / rho^{-1}(delta rho_sup)
        u = optimize.brentq(lambda t: bisquare_scalar(t, f.cutoff) / f.rho_sup - delta,
                            1e-9, f.cutoff, xtol=1e-15)
        assert m_scale(np.full(20, k), f, MScaleSpec(delta)) == pytest.approx(k / u, rel=1e-9)

    def test_zero_vector(self):
        assert m_scale(np.zeros(10), FAMILIES[0]) == 0.0

    def test_too_many_zeros(self):
        r = np.zeros(10)
        r[:3] = 1.0
        with pytest.raises(DegenerateResiduals):
            m_scale(r, FAMILIES[0], MScaleSpec(0.5))

    def test_fixed_point_many_vectors(self):
        rng = np.random.default_rng(7)
        f = calibrate_cutoff("bisquare", 0.25)
        spec = MScaleSpec(0.25)
        for _ in range(200):
            r = rng.standard_t(2, size=rng.integers(10, 201))
            s = m_scale(r, f, spec)
            assert abs(np.mean(f.rho_normalized(r / s)) - 0.25) < spec.tolerance

    def test_monotone(self):
        rng = np.random.default_rng(3)
        f = FAMILIES[0]
        r = rng.standard_normal(50)
        bigger = np.abs(r) * 1.1
        assert m_scale(bigger, f) >= m_scale(r, f)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=5, max_size=60),
           st.floats(1e-3, 1e3), st.sampled_from([-1.0, 1.0]))
    def test_equivariance(self, values, c, sign):
        r = np.array(values)
        if np.count_nonzero(r) <= 0.5 * r.size or np.max(np.abs(r)) < 1e-6:
            return
        f = calibrate_cutoff("bisquare", 0.5)
        s = m_scale(r, f)
        assert m_scale(sign * c * r, f) == pytest.approx(c * s, rel=1e-8)


class TestWeights:
    def test_all_zero_residuals(self):
        w = robustness_weights(np.zeros(5), FAMILIES[0], 1.0)
        np.testing.assert_array_equal(w.weights, np.ones(5))

    def test_far_outlier_gets_zero(self):
        f = FAMILIES[0]
        r = np.zeros(6)
        r[2] = 10 * f.cutoff * 2.0
        w = robustness_weights(r, f, 2.0)
        assert w.weights[2] == 0.0
        assert w.n_zero == 1

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(5)
        c, scale = 1.5476, 0.8
        r = rng.standard_normal(40)
        w = robustness_weights(r, RhoFunction("bisquare", c), scale).weights
        u = r / scale
        raw = np.where(np.abs(u) < c, (1 - (u / c) ** 2) ** 2, 0.0)
        # psi(u) / u for the unnormalized bisquare is (1 - (u/c)^2)^2
        np.testing.assert_allclose(w, raw / raw[raw > 0].mean(), rtol=1e-12)

    @pytest.mark.parametrize("f", FAMILIES, ids=lambda f: f.kind)
    def test_zero_pattern(self, f):
        rng = np.random.default_rng(2)
        r = rng.standard_normal(200) * 2
        w = robustness_weights(r, f, 1.0).weights
        np.testing.assert_array_equal(w == 0, np.abs(r) >= f.flat_cutoff)
