import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tickvar.asymptotics import min_weight, sine_weight
from tickvar.preavg import (
    PreAvgConfig,
    TruncationError,
    bipower_variation,
    jump_variation,
    log_returns,
    noise_ratio,
    noise_variance_ac,
    preavg_bv,
    preavg_returns,
    preavg_rv,
    realized_variance,
    threshold_tau,
    truncated_preavg_bv,
    variation_report,
)
from tickvar.simlab import NoiseSpec, SimSpec, simulate


def brownian(n, sigma2, seed, x0=0.0):
    rng = np.random.default_rng(seed)
    r = rng.normal(0.0, math.sqrt(sigma2 / n), n)
    return np.concatenate([[x0], x0 + np.cumsum(r)])


class TestLogReturns:
    def test_constant_price_gives_zeros(self):
        y = np.zeros(10)
        assert np.all(log_returns(y) == 0.0)

    def test_log_arithmetic(self):
        prices_as_logs = np.array([0.0, 0.01, 0.03])
        r = log_returns(prices_as_logs)
        np.testing.assert_allclose(r, [0.01, 0.02], rtol=1e-15)

    def test_reconstruction(self):
        y = brownian(500, 0.04, seed=3, x0=1.2)
        r = log_returns(y)
        np.testing.assert_allclose(y[0] + np.cumsum(r), y[1:], rtol=0, atol=1e-12)

    def test_needs_two_observations(self):
        with pytest.raises(ValueError):
            log_returns(np.array([1.0]))


class TestRealizedVariance:
    def test_zeros(self):
        assert realized_variance(np.zeros(5)) == 0.0

    def test_hand_sum_of_squares(self):
        assert math.isclose(realized_variance(np.array([0.01, -0.02, 0.03])), 0.0014, rel_tol=1e-12)

    def test_consistency_noise_free_bm(self):
        vals = [realized_variance(np.diff(brownian(20_000, 0.0391, seed=s))) for s in range(1000)]
        assert abs(np.mean(vals) / 0.0391 - 1) < 0.01


class TestBipowerVariation:
    def test_zeros(self):
        assert bipower_variation(np.zeros(5)) == 0.0

    def test_constant_returns(self):
        a = 0.013
        got = bipower_variation(np.array([a, a, a]))
        assert math.isclose(got, 1.5 * math.pi * a * a, rel_tol=1e-12)

    def test_jump_robustness(self):
        # one jump carrying 20% of total variation inflates the squared-return
        # sum by about a quarter but barely moves the bipower measure
        rv, bv = [], []
        for s in range(500):
            path = simulate(SimSpec(model="BMJ", n_steps=20_000, seed=11, path_id=s))
            r = np.diff(path.efficient_log_prices)
            rv.append(realized_variance(r) / path.true_iv)
            bv.append(bipower_variation(r) / path.true_iv)
        assert abs(np.mean(rv) - 1.25) < 0.02
        assert abs(np.mean(bv) - 1.0) < 0.05


class TestNoiseVarianceAC:
    def test_single_reversal(self):
        a = 0.007
        assert math.isclose(noise_variance_ac(np.array([a, -a])), a * a, rel_tol=1e-12)

    def test_linear_path_goes_negative(self):
        c = 0.002
        r = np.full(101, c)
        assert math.isclose(noise_variance_ac(r), -c * c, rel_tol=1e-12)

    def test_pure_noise_calibration(self):
        omega2 = 1e-8
        rng = np.random.default_rng(5)
        est = []
        for _ in range(200):
            u = rng.normal(0.0, math.sqrt(omega2), 100_001)
            est.append(noise_variance_ac(np.diff(u)))
        assert abs(np.mean(est) / omega2 - 1) < 0.02


class TestPreavgReturns:
    def test_constant_price(self):
        assert np.all(preavg_returns(np.full(50, 3.2), 6) == 0.0)

    @pytest.mark.parametrize("k", [4, 10, 48])
    def test_linear_path_telescopes(self, k):
        c = 5e-4
        y = c * np.arange(300, dtype=float)
        np.testing.assert_allclose(preavg_returns(y, k), c * k / 4, rtol=1e-9)

    def test_unit_spike(self):
        y = np.zeros(20)
        y[5] = 1.0
        assert preavg_returns(y, 4)[2] == pytest.approx(0.25, rel=1e-14)

    def test_window_two_reduces_to_scaled_ticks(self):
        y = brownian(64, 0.02, seed=9)
        np.testing.assert_allclose(preavg_returns(y, 2), np.diff(y) / 2.0, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("k", [3, 0, 600])
    def test_rejects_bad_windows(self, k):
        with pytest.raises(ValueError):
            preavg_returns(np.zeros(500), k)

    def test_general_weight_matches_direct_convolution(self):
        w = sine_weight()
        y = brownian(400, 0.03, seed=21)
        k = 20
        got = preavg_returns(y, k, w)
        r = np.diff(y)
        want = np.array([np.sum(w.g(np.arange(1, k) / k) * r[i : i + k - 1]) for i in range(y.size - k + 1)])
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_tent_weight_general_path_matches_fast_path(self):
        y = brownian(400, 0.03, seed=22)
        np.testing.assert_allclose(preavg_returns(y, 14, min_weight()), preavg_returns(y, 14), rtol=0, atol=1e-12)

    def test_batched_axis(self):
        ys = np.stack([brownian(200, 0.02, seed=s) for s in range(4)])
        batched = preavg_returns(ys, 10)
        for row, y in zip(batched, ys):
            np.testing.assert_array_equal(row, preavg_returns(y, 10))


class TestStarredMeasures:
    def test_constant_price_is_zero(self):
        y = np.full(500, 4.0)
        cfg = PreAvgConfig(theta=1.0)
        assert preavg_rv(y, cfg) == 0.0
        assert preavg_bv(y, cfg) == 0.0

    def test_too_short_raises(self):
        cfg = PreAvgConfig(theta=5.0)
        with pytest.raises(ValueError):
            preavg_rv(np.zeros(12), cfg)
        with pytest.raises(ValueError):
            preavg_bv(np.zeros(20), cfg)

    def test_noisy_bm_recovers_variance(self):
        cfg = PreAvgConfig(theta=1.0)
        spec = SimSpec(model="BM", n_steps=40_000, seed=13, noise=NoiseSpec(gamma=0.5))
        rv, bv = [], []
        for pid in range(150):
            p = simulate(replace(spec, path_id=pid))
            rv.append(preavg_rv(p.observed_log_prices, cfg) / p.true_iv)
            bv.append(preavg_bv(p.observed_log_prices, cfg) / p.true_iv)
        assert abs(np.mean(rv) - 1.0) < 0.02
        assert abs(np.mean(bv) - 1.0) < 0.02

    def test_batched_matches_loop(self):
        cfg = PreAvgConfig(theta=0.5)
        ys = np.stack([brownian(2_000, 0.04, seed=s) for s in range(3)])
        np.testing.assert_allclose(preavg_rv(ys, cfg), [preavg_rv(y, cfg) for y in ys], rtol=1e-14)
        np.testing.assert_allclose(preavg_bv(ys, cfg), [preavg_bv(y, cfg) for y in ys], rtol=1e-14)


class TestThresholdTau:
    def test_zero_inputs(self):
        assert threshold_tau(0.0, 0.0, PreAvgConfig(), 40_000) == 0.0

    def test_quantile_against_bisection_oracle(self):
        # invert the normal CDF at 0.999 by bisection on math.erf
        lo, hi = 0.0, 10.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if 0.5 * (1 + math.erf(mid / math.sqrt(2))) < 0.999:
                lo = mid
            else:
                hi = mid
        q = 0.5 * (lo + hi)
        assert math.isclose(q, 3.0902, rel_tol=2e-5)
        cfg = PreAvgConfig()
        n = 40_000
        got = threshold_tau(1.0, 0.0, cfg, n)
        k = cfg.window(n)
        theta_eff = k / math.sqrt(n)
        assert math.isclose(got, q / n**0.2 * math.sqrt(1.0 / theta_eff), rel_tol=1e-6)

    def test_hand_substitution(self):
        n = 40_000
        sigma2 = 0.0391
        omega2 = sigma2 * 0.25 / n
        cfg = PreAvgConfig(theta=1.0)
        k = cfg.window(n)
        psi_k = (1 + 2 / k**2) / 12
        from scipy.stats import norm

        want = norm.ppf(0.999) / n**0.2 * math.sqrt(psi_k * 1.0 * sigma2 + omega2 / 1.0)
        assert math.isclose(threshold_tau(omega2, sigma2, cfg, n), want, rel_tol=1e-12)

    def test_rejects_negative_inputs(self):
        with pytest.raises(ValueError):
            threshold_tau(-1e-9, 0.0, PreAvgConfig(), 100)


class TestTruncatedPreavgBv:
    def test_no_breaches_is_bitwise_equal(self):
        p = simulate(SimSpec(model="BM", n_steps=4_000, seed=17))
        cfg = PreAvgConfig(theta=1.0)
        y = p.observed_log_prices
        # confirm the fixture really has no breaching window
        rstar = preavg_returns(y, cfg.window(y.size - 1))
        omega2 = max(noise_variance_ac(np.diff(y)), 0.0)
        tau = threshold_tau(omega2, max(preavg_bv(y, cfg), 0.0), cfg, y.size - 1)
        assert np.max(np.abs(rstar)) <= tau
        val, iters = truncated_preavg_bv(y, cfg)
        assert iters == 0
        assert val == preavg_bv(y, cfg)

    def test_single_spike_removed_in_one_pass(self):
        n = 2_000
        y = np.zeros(n + 1)
        y[700:] += 0.05
        cfg = PreAvgConfig(theta=1.0)
        val, iters = truncated_preavg_bv(y, cfg)
        assert iters == 1
        flat = np.zeros(n)
        assert val == preavg_bv(flat, cfg)

    def test_spiked_bm_matches_manual_reconnection(self):
        p = simulate(SimSpec(model="BM", n_steps=8_000, seed=23))
        y = p.efficient_log_prices.copy()
        jump_at = 4_321
        y[jump_at:] += 0.08
        cfg = PreAvgConfig(theta=1.0)
        val, iters = truncated_preavg_bv(y, cfg)
        assert iters == 1
        # reconnect by hand: drop the spiked tick return and re-cumulate
        r = np.diff(y)
        spiked = int(np.argmax(np.abs(r)))
        assert spiked == jump_at - 1
        manual = np.concatenate([y[:1], y[0] + np.cumsum(np.delete(r, spiked))])
        assert val == preavg_bv(manual, cfg)

    def test_iteration_cap_raises(self):
        y = np.zeros(2_001)
        y[900:] += 0.05
        with pytest.raises(TruncationError):
            truncated_preavg_bv(y, PreAvgConfig(theta=1.0), max_iterations=0)


class TestJumpVariationAndNoiseRatio:
    def test_equal_inputs(self):
        assert jump_variation(0.3, 0.3) == 0.0

    def test_design_point(self):
        assert math.isclose(jump_variation(1.25, 1.0), 0.2, rel_tol=1e-12)

    def test_annualized_vol_inputs(self):
        jv = jump_variation(31.6**2, 31.4**2)
        assert math.isclose(jv, 1 - (31.4 / 31.6) ** 2, rel_tol=1e-12)
        assert round(100 * jv, 1) == 1.3

    def test_negative_jv_allowed(self):
        assert jump_variation(1.0, 1.02) < 0.0

    def test_jv_rejects_nonpositive_total(self):
        with pytest.raises(ValueError):
            jump_variation(0.0, 1.0)

    def test_noise_ratio_zero(self):
        assert noise_ratio(0.0, 1.0, 100) == 0.0

    def test_noise_ratio_algebra(self):
        iv = 0.0391
        assert math.isclose(noise_ratio(iv / 160_000, iv, 40_000), 0.5, rel_tol=1e-12)

    def test_noise_ratio_monte_carlo(self):
        spec = SimSpec(model="BM", n_steps=40_000, seed=29, noise=NoiseSpec(gamma=0.5))
        vals = []
        for pid in range(100):
            p = simulate(replace(spec, path_id=pid))
            r = np.diff(p.observed_log_prices)
            vals.append(noise_ratio(max(noise_variance_ac(r), 0.0), p.true_iv, r.size))
        assert abs(np.mean(vals) / 0.5 - 1) < 0.05

    def test_noise_ratio_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            noise_ratio(1e-8, 0.0, 10)


class TestVariationReport:
    def test_report_fields_cohere(self):
        p = simulate(SimSpec(model="BM", n_steps=4_000, seed=31, noise=NoiseSpec(gamma=0.5)))
        rep = variation_report(p.observed_log_prices, PreAvgConfig(theta=1.0))
        assert rep.n_obs == 4_001
        assert rep.rv > 0 and rep.bv > 0
        assert math.isclose(rep.jv, (rep.rv_star - rep.bv_star_tau) / rep.rv_star, rel_tol=1e-12)
        assert rep.truncation_iterations >= 0


class TestScaleEquivariance:
    @settings(max_examples=12, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([0.5, 1.7, 2.0, 3.3]))
    def test_quadratic_scaling(self, seed, c):
        p = simulate(SimSpec(model="BM", n_steps=3_000, seed=101, path_id=seed, noise=NoiseSpec(gamma=0.5)))
        y = p.observed_log_prices
        cfg = PreAvgConfig(theta=0.8)
        base = variation_report(y, cfg)
        scaled = variation_report(c * y, cfg)
        for name in ("rv", "bv", "rv_star", "bv_star", "bv_star_tau", "omega2_hat"):
            np.testing.assert_allclose(getattr(scaled, name), c * c * getattr(base, name), rtol=1e-9, atol=1e-18)
        np.testing.assert_allclose(scaled.jv, base.jv, rtol=1e-7, atol=1e-12)
        np.testing.assert_allclose(scaled.gamma_hat, base.gamma_hat, rtol=1e-7)


class TestOutlierRobustnessRate:
    def test_outlier_impact_shrinks_at_least_like_inverse_window(self):
        # a fixed-size outlier moves the noise-robust variance measure by
        # a term bounded by O(1/K); empirically the decay is even faster
        cfg = PreAvgConfig(theta=1.0)
        sizes = (10_000, 40_000, 160_000)
        deltas = []
        for n in sizes:
            spec = SimSpec(model="BM", n_steps=n, seed=37, noise=NoiseSpec(gamma=0.5))
            gaps = []
            for pid in range(20):
                p = simulate(replace(spec, path_id=pid))
                y = p.observed_log_prices
                y2 = y.copy()
                y2[n // 2] += 0.05
                gaps.append(abs(preavg_rv(y2, cfg) - preavg_rv(y, cfg)))
            deltas.append(np.mean(gaps))
        ks = [cfg.window(n) for n in sizes]
        slope = np.polyfit(np.log(ks), np.log(deltas), 1)[0]
        assert slope < -0.7
