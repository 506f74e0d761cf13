from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_set
from scoco.instrument import DualTrigger, SCoCoSpec, build_schedules
from scoco.pricing_mc import (
    ParRateUndefined,
    discount_factors,
    par_rate,
    par_rate_table,
    pathwise_values,
    price,
    price_dual,
)
from scoco.presets import country, flat_rate_factor, rate_factor
from scoco.scenario_engine import FactorModel, ScenarioConfig, generate
from scoco.srmr_process import MomentTargets


def coupon_bond(c, r, dt, T):
    v = [math.exp(-r * dt * t) for t in range(1, T + 1)]
    return c * math.fsum(v) + v[-1]


def textbook_par(r, dt, T):
    v = [math.exp(-r * dt * t) for t in range(1, T + 1)]
    return (1 - v[-1]) / math.fsum(v)


class TestDiscounting:
    def test_one_step(self):
        d = discount_factors(np.full((1, 3), 0.04), 0.5)
        assert d.factors[0, 0] == 1.0
        assert d.factors[0, 1] == pytest.approx(0.980199, abs=1e-6)

    def test_rate_at_end_of_interval_is_unused(self):
        # B(0, t) only uses rates observed before t
        a = discount_factors(np.array([[0.02, 0.03, 0.50]]), 1.0).factors
        assert a[0, 2] == pytest.approx(math.exp(-0.05), rel=1e-15)

    def test_between(self):
        d = discount_factors(np.full((2, 5), 0.02), 0.5)
        assert np.allclose(d.between(1, np.array([3, 4])), np.exp(-0.01 * np.array([2, 3])))


class TestStraightBond:
    @pytest.mark.parametrize("r,c", [(0.02, 0.015), (0.0, 0.01), (0.05, 0.0)])
    def test_flat_rate_closed_form(self, r, c):
        s = make_set(np.full((3, 23), r), 100.0)
        res = price(s, SCoCoSpec(20, c, math.inf))
        assert abs(res.price - coupon_bond(c, r, 0.5, 20)) < 1e-12
        assert res.standard_error == 0.0
        assert res.trigger_probability == 0.0

    def test_par_is_textbook(self):
        s = make_set(np.full((1, 23), 0.03), 100.0)
        pr = par_rate(s, SCoCoSpec(20, 0.0, math.inf))
        assert abs(pr.per_period - textbook_par(0.03, 0.5, 20)) < 1e-10
        assert pr.annualized == pytest.approx(2 * pr.per_period)
        assert abs(pr.residual) < 1e-10
        assert abs(pr.bisection - pr.per_period) < 1e-12

    def test_generated_flat_rate_is_exact(self):
        cfg = ScenarioConfig(2, 5, 11, seed=1)
        s = generate(cfg, country("germany").spread_factor(), flat_rate_factor(0.02))
        assert np.all(np.abs(s.rates - 0.02) < 1e-15)
        res = price(s, SCoCoSpec(20, 0.01, math.inf))
        assert abs(res.price - coupon_bond(0.01, 0.02, 0.5, 20)) < 1e-12


class TestStandstills:
    def test_interior_standstill_hand_computed(self):
        T, c, r = 10, 0.02, 0.04
        s = np.full(T + 3, 50.0)
        s[3] = 300.0
        sc = make_set(np.full(T + 3, r), s)
        v = [math.exp(-r * 0.5 * t) for t in range(T + 3)]
        expected = c * math.fsum(v[t] for t in range(1, T + 1) if t not in (3, 4, 5)) + v[T]
        res = price(sc, SCoCoSpec(T, c, 200.0, 2))
        assert abs(res.price - expected) < 1e-14
        assert res.mean_standstills == 1.0

    def test_deferred_principal_hand_computed(self):
        T, c, r = 10, 0.02, 0.04
        s = np.full(T + 3, 50.0)
        s[9] = 300.0
        sc = make_set(np.full(T + 3, r), s)
        v = [math.exp(-r * 0.5 * t) for t in range(T + 3)]
        expected = c * math.fsum(v[1:9]) + v[12]
        res = price(sc, SCoCoSpec(T, c, 200.0, 2))
        assert abs(res.price - expected) < 1e-14
        assert res.mean_deferral == 2.0

    def test_horizon_too_short(self):
        sc = make_set(np.full(11, 0.01), 50.0)
        with pytest.raises(ValueError, match="horizon too short"):
            price(sc, SCoCoSpec(10, 0.01, 200.0, 2))

    def test_par_undefined_when_always_suspended(self):
        sc = make_set(np.full(13, 0.01), 500.0)
        with pytest.raises(ParRateUndefined):
            par_rate(sc, SCoCoSpec(10, 0.0, 100.0, 2))

    def test_par_undefined_with_negative_rates(self):
        sc = make_set(np.full(13, -0.01), 50.0)
        with pytest.raises(ParRateUndefined):
            par_rate(sc, SCoCoSpec(10, 0.0, math.inf))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(20.0, 400.0), min_size=13, max_size=13), st.floats(0.0, 0.05))
    def test_price_affine_in_coupon(self, s, r):
        sc = make_set(np.full(13, r), np.array(s))
        spec = SCoCoSpec(10, 0.0, 200.0)
        p0 = price(sc, spec).price
        p1 = price(sc, spec.with_coupon(0.01)).price
        p2 = price(sc, spec.with_coupon(0.02)).price
        assert abs((p2 - p1) - (p1 - p0)) < 1e-14

    def test_explicit_schedule_is_used(self):
        sc = make_set(np.full(13, 0.02), 50.0)
        spec = SCoCoSpec(10, 0.01, 200.0)
        sch = build_schedules(np.full((1, 11), 300.0), spec)
        assert price(sc, spec, sch).price < price(sc, spec).price


class TestDual:
    def test_missing_index(self):
        sc = make_set(np.full(15, 0.02), 50.0)
        with pytest.raises(ValueError, match="missing market index"):
            price_dual(sc, SCoCoSpec(10, 0.01, 200.0, dual=DualTrigger(100.0, 2, 4)))

    def test_reductions(self):
        g = np.random.default_rng(5)
        spreads = g.uniform(50, 400, size=(300, 15))
        base = make_set(np.full((300, 15), 0.02), spreads)
        single = SCoCoSpec(10, 0.01, 200.0, 2)
        high = base.with_index(np.full((300, 15), 500.0))
        low = base.with_index(np.full((300, 15), 1.0))
        p_single = price(base, single).price
        k_market = SCoCoSpec(10, 0.01, 200.0, dual=DualTrigger(100.0, 2, 4))
        k_idio = SCoCoSpec(10, 0.01, 200.0, dual=DualTrigger(100.0, 1, 2))
        assert price_dual(high, k_market).price == p_single
        assert price_dual(low, k_idio).price == p_single


class TestMonteCarlo:
    def test_standard_error_scales(self):
        # one regime, so paths are iid and the standard error is honest
        sf = FactorModel.single(MomentTargets(150.0, 40.0, 0.05, 0.25 * 0.05**2, 150.0))
        rf = flat_rate_factor(0.02)
        spec = SCoCoSpec(20, 0.01, 200.0)
        small = price(generate(ScenarioConfig(1, 500, 11, seed=3), sf, rf), spec)
        large = price(generate(ScenarioConfig(1, 2000, 11, seed=4), sf, rf), spec)
        assert 0.4 <= large.standard_error / small.standard_error <= 0.6

    def test_pathwise_mean_is_price(self):
        s = generate(ScenarioConfig(2, 50, 11, seed=2), country("greece").spread_factor(), rate_factor())
        spec = SCoCoSpec(20, 0.02, 200.0)
        assert math.fsum(pathwise_values(s, spec)) / s.n_paths == pytest.approx(price(s, spec).price, rel=1e-15)

    def test_par_table(self):
        s = generate(ScenarioConfig(2, 100, 11, seed=2), country("greece").spread_factor(), rate_factor())
        rows = par_rate_table(s, SCoCoSpec(20, 0.0, 200.0), [100, 400])
        assert rows[0]["par_rate"] >= rows[1]["par_rate"] >= rows[1]["straight_par_rate"] - 1e-12
        for row in rows:
            assert row["premium_bp"] == pytest.approx((row["par_rate"] - row["straight_par_rate"]) * 1e4)
