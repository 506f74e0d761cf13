from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.linalg import solve_discrete_lyapunov

from scoco.srmr_process import (
    CalibrationError,
    CorrelationSpec,
    MomentTargets,
    SRMRParams,
    SRMRState,
    analytic_moments,
    calibrate,
    correlated_noise,
    estimate_moments,
    moment_residuals,
    reanchor,
    simulate,
    step,
)


def discrete_stationary(params: SRMRParams, start_level: float):
    """Exact long-run moments of the unit-step recursion via a Lyapunov solve."""
    k0, k1, k2, s = params.k0, params.k1, params.k2, params.sigma
    a = np.array([[1 - k1, -k2], [1 - k1, 1 - k2]])
    mean = np.linalg.solve(np.eye(2) - a, [k0, k0])
    cov = solve_discrete_lyapunov(a, s * s * np.ones((2, 2)))
    level_mean = start_level * math.exp(mean[1] + cov[1, 1] / 2)
    level_var = level_mean**2 * math.expm1(cov[1, 1])
    c = np.array([-k1, -k2])
    return level_mean, level_var, cov[0, 0], c @ cov @ c + s * s


@st.composite
def feasible_targets(draw):
    mean = draw(st.floats(5.0, 6000.0))
    cv = draw(st.floats(0.05, 1.0))
    rstd = draw(st.floats(0.005, 0.1))
    start = draw(st.floats(0.2, 5.0)) * mean
    k2 = rstd**2 / math.log1p(cv * cv)
    ratio = k2 + draw(st.floats(1e-3, 2.0))
    return MomentTargets(mean, cv * mean, rstd, ratio * rstd**2, start)


class TestEstimateMoments:
    def test_constant_series_is_degenerate(self):
        t = estimate_moments([100.0] * 10)
        assert (t.level_mean, t.level_stdev, t.return_stdev, t.smoothness) == (100.0, 0.0, 0.0, 0.0)
        assert t.degenerate
        with pytest.raises(CalibrationError):
            calibrate(t)

    def test_construct_then_measure(self):
        rng = np.random.default_rng(0)
        rets = 0.01 * rng.standard_normal(500)
        levels = 120.0 * np.exp(np.r_[0.0, np.cumsum(rets)])
        t = estimate_moments(levels)
        assert t.level_mean == pytest.approx(levels.mean(), rel=1e-14)
        assert t.level_stdev == pytest.approx(levels.std(), rel=1e-14)
        assert t.return_stdev == pytest.approx(rets.std(), rel=1e-10)
        assert t.smoothness == pytest.approx(np.mean(np.diff(rets) ** 2), rel=1e-10)
        assert t.start_level == 120.0

    @pytest.mark.parametrize("bad", [[1.0, 2.0], [1.0, 0.0, 2.0], [1.0, -3.0, 2.0]])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            estimate_moments(bad)


class TestCalibrate:
    def test_zero_log_ratio_drift(self):
        t = MomentTargets(200.0, 40.0, 0.02, 2e-4, 200.0)
        assert calibrate(t).k0 == -0.5 * 0.02**2

    def test_infeasible_smoothness(self):
        t = MomentTargets(200.0, 40.0, 0.02, 1e-6, 200.0)
        with pytest.raises(CalibrationError, match="smoothness incompatible with return variance"):
            calibrate(t)

    def test_vanishing_level_stdev(self):
        with pytest.raises(CalibrationError):
            calibrate(MomentTargets(200.0, 1e-160, 0.02, 2e-4, 200.0))

    @settings(max_examples=200, deadline=None)
    @given(feasible_targets())
    def test_round_trip(self, t):
        p = calibrate(t)
        assert np.max(np.abs(moment_residuals(p, t))) < 1e-10
        back = analytic_moments(p, t.start_level)
        for name in ("level_mean", "level_stdev", "return_stdev", "smoothness"):
            assert getattr(back, name) == pytest.approx(getattr(t, name), rel=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(feasible_targets(), st.floats(0.2, 5.0))
    def test_reanchor_matches_recalibration(self, t, factor):
        new = t.start_level * factor
        a = reanchor(calibrate(t), t.start_level, new)
        b = calibrate(t.with_start(new))
        assert a.k0 == pytest.approx(b.k0, rel=1e-9, abs=1e-15)
        assert (a.k1, a.k2, a.sigma) == (b.k1, b.k2, b.sigma)

    def test_larger_sigma_rougher_paths(self):
        base = dict(level_mean=300.0, level_stdev=60.0, return_stdev=0.02, start_level=300.0)
        realized = []
        for ratio in (0.05, 0.2, 0.8):
            p = calibrate(MomentTargets(smoothness=ratio * 4e-4, **base))
            r, _ = simulate(p, 300.0, 20_000, np.random.default_rng(3), n_paths=4)
            realized.append((p.sigma, np.mean(np.diff(r[:, 2000:]) ** 2)))
        sig, sm = zip(*realized)
        assert list(sig) == sorted(sig)
        assert list(sm) == sorted(sm)


class TestStep:
    def test_fixed_point(self):
        p = SRMRParams(k0=0.01, k1=0.3, k2=0.02, sigma=0.0)
        s = SRMRState(0.0, p.k0 / p.k2, 100.0)
        for _ in range(100):
            s = step(s, p, 0.0)
        assert s.ret == 0.0
        assert s.level == pytest.approx(100.0 * math.exp(0.5), rel=1e-14)

    def test_deterministic_convergence(self):
        p = SRMRParams(k0=0.01, k1=0.3, k2=0.02, sigma=0.0)
        s = SRMRState(0.05, -1.0, 100.0)
        for _ in range(5000):
            s = step(s, p, 0.0)
        assert s.cum == pytest.approx(0.5, abs=1e-10)

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            step(SRMRState(0.0, 0.0, 1.0), SRMRParams(0.0, 0.1, 0.1, 0.1), 0.0, dt=0.0)

    def test_simulate_matches_step(self):
        p = calibrate(MomentTargets(300.0, 60.0, 0.02, 4e-5, 250.0))
        rng = np.random.default_rng(9)
        r, lv = simulate(p, 250.0, 50, rng)
        eps = np.random.default_rng(9).standard_normal((50, 1))[:, 0]
        s = SRMRState(0.0, 0.0, 250.0)
        for t in range(50):
            s = step(s, p, eps[t])
            assert s.ret == pytest.approx(r[0, t + 1], rel=1e-12, abs=1e-15)
            assert s.level == pytest.approx(lv[0, t + 1], rel=1e-12)

    def test_long_run_return_variance(self):
        p = calibrate(MomentTargets(300.0, 60.0, 0.02, 4e-5, 300.0))
        r, _ = simulate(p, 300.0, 60_000, np.random.default_rng(1), n_paths=8)
        var = np.var(r[:, 5000:])
        assert var == pytest.approx(p.sigma**2 / (2 * p.k1), rel=0.05)
        assert var == pytest.approx(discrete_stationary(p, 300.0)[2], rel=0.02)


class TestLongRunBehaviour:
    def test_positive_and_bounded(self):
        p = calibrate(MomentTargets(980.0, 363.0, 0.052, 0.25 * 0.052**2, 146.0))
        _, lv = simulate(p, 146.0, 40_000, np.random.default_rng(4), n_paths=16)
        assert np.all(lv > 0)
        v1 = np.var(lv[:, 20_000:30_000])
        v2 = np.var(lv[:, 30_000:])
        assert 0.5 < v1 / v2 < 2.0

    def test_discrete_oracle_levels_match_targets(self):
        # level moments of the unit-step recursion sit on the continuous targets
        t = MomentTargets(300.0, 60.0, 0.02, 4e-5, 250.0)
        m, v, _, _ = discrete_stationary(calibrate(t), 250.0)
        assert m == pytest.approx(300.0, rel=1e-3)
        assert math.sqrt(v) == pytest.approx(60.0, rel=5e-3)


class TestCorrelatedNoise:
    def test_limits(self):
        a, b = np.array([0.3, -1.0]), np.array([2.0, 0.5])
        w1, w2 = correlated_noise(CorrelationSpec(0.0), a, b)
        np.testing.assert_array_equal(w2, b)
        w1, w2 = correlated_noise(1.0, a, b)
        np.testing.assert_array_equal(w1, w2)

    def test_sample_correlation(self):
        rng = np.random.default_rng(5)
        w1, w2 = correlated_noise(0.5, rng.standard_normal(1_000_000), rng.standard_normal(1_000_000))
        assert abs(np.corrcoef(w1, w2)[0, 1] - 0.5) < 0.003

    def test_invalid_rho(self):
        with pytest.raises(ValueError):
            CorrelationSpec(1.5)
        with pytest.raises(ValueError):
            correlated_noise(-1.01, 0.0, 0.0)


@settings(max_examples=30, deadline=None)
@given(feasible_targets())
def test_discrete_level_moments_close_to_targets(t):
    p = calibrate(t)
    assume(p.k1 < 0.5 and p.k2 < 0.2)
    m, v, _, _ = discrete_stationary(p, t.start_level)
    assert m == pytest.approx(t.level_mean, rel=0.02)
