from __future__ import annotations

import numpy as np
import pytest

from scoco.presets import country, rate_factor
from scoco.regime_model import TransitionMatrix, estimate_max_entropy
from scoco.scenario_engine import (
    FactorModel,
    ScenarioConfig,
    averaged_targets,
    draw_noise,
    export_csv,
    generate,
    load_scenarios,
    regime_off_variant,
    save_scenarios,
    testbed_config as bed_config,
)
from scoco.srmr_process import AnchoredParams, CorrelationSpec, MomentTargets

GREECE = country("greece")
SPREAD = GREECE.spread_factor()
RATE = rate_factor()


def small(**kw):
    base = dict(n_regime_scenarios=3, n_paths_per_regime=4, horizon_years=3, seed=9)
    base.update(kw)
    return ScenarioConfig(**base)


def targets(mean=100.0, sd=20.0, ret=0.03):
    return MomentTargets(mean, sd, ret, 0.25 * ret * ret, mean)


class TestConfig:
    def test_grid(self):
        cfg = small()
        assert (cfg.n_steps, cfg.days_per_step, cfg.n_days, cfg.n_paths) == (6, 126, 756, 12)

    @pytest.mark.parametrize("kw", [dict(n_regime_scenarios=0), dict(horizon_years=0), dict(horizon_years=1.3),
                                    dict(periods_per_year=5), dict(index_correlation=2.0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            small(**kw)

    def test_testbeds(self):
        base = small()
        assert bed_config("R-100", base).n_paths == 100_000
        assert bed_config("R-1", base).n_regime_scenarios == 1
        with pytest.raises(ValueError):
            bed_config("R-7", base)


class TestFactorModel:
    def test_missing_calibration_named(self):
        m = estimate_max_entropy([0.5, 0.3, 0.2], (0.99, 0.98))
        cal = AnchoredParams.from_targets(targets())
        with pytest.raises(ValueError, match="missing calibration for regime 2"):
            FactorModel(m, (cal, cal))

    def test_bad_initial(self):
        with pytest.raises(ValueError):
            FactorModel(TransitionMatrix(np.ones((1, 1))), (AnchoredParams.from_targets(targets()),), initial=3)


class TestGeneration:
    def test_shapes_and_dt(self):
        s = generate(small(), SPREAD, RATE)
        assert s.rates.shape == s.spreads.shape == (12, 7)
        assert s.dt == 0.5
        assert np.all(s.spreads > 0)
        assert list(s.outer) == [0] * 4 + [1] * 4 + [2] * 4

    def test_reproducible(self):
        assert generate(small(), SPREAD, RATE) == generate(small(), SPREAD, RATE)
        assert not generate(small(), SPREAD, RATE) == generate(small(seed=10), SPREAD, RATE)

    def test_independent_of_chunking_and_threads(self):
        ref = generate(small(), SPREAD, RATE)
        assert generate(small(chunk_size=5), SPREAD, RATE) == ref
        assert generate(small(chunk_size=3, threads=3), SPREAD, RATE) == ref

    def test_path_does_not_depend_on_path_count(self):
        a = generate(small(n_paths_per_regime=4), SPREAD, RATE)
        b = generate(small(n_paths_per_regime=9), SPREAD, RATE)
        for o in range(3):
            for i in range(4):
                ra = np.flatnonzero((a.outer == o) & (a.inner == i))[0]
                rb = np.flatnonzero((b.outer == o) & (b.inner == i))[0]
                assert np.array_equal(a.spreads[ra], b.spreads[rb])
                assert np.array_equal(a.rates[ra], b.rates[rb])

    def test_daily_grid_downsamples_exactly(self):
        coarse = generate(small(), SPREAD, RATE)
        fine = generate(small(), SPREAD, RATE, daily=True)
        assert fine.dt == 1 / 252
        assert np.array_equal(fine.spreads[:, ::126], coarse.spreads)
        assert np.array_equal(fine.rates[:, ::126], coarse.rates)
        assert np.array_equal(fine.regimes[:, ::126], coarse.regimes)

    def test_noise_bank_reuse(self):
        cfg = small()
        assert generate(cfg, SPREAD, RATE, noise=draw_noise(cfg)) == generate(cfg, SPREAD, RATE)

    def test_regimes_shared_within_outer_scenario(self):
        s = generate(small(n_regime_scenarios=2, horizon_years=10), SPREAD, RATE)
        for o in range(2):
            rows = s.regimes[s.outer == o]
            assert np.all(rows == rows[0])

    def test_full_correlation_gives_identical_factors(self):
        f = FactorModel.single(targets())
        s = generate(small(correlation=CorrelationSpec(1.0)), f, f)
        assert np.allclose(s.rates, s.spreads, rtol=1e-15)

    def test_stationary_start(self):
        m = estimate_max_entropy([0.7, 0.3], (0.9,))
        cal = AnchoredParams.from_targets(targets())
        f = FactorModel(m, (cal, cal))
        cfg = ScenarioConfig(2000, 1, 0.5, seed=1)
        s = generate(cfg, f, FactorModel.single(targets()))
        assert np.mean(s.regimes[:, 0] == 0) == pytest.approx(0.7, abs=0.04)

    def test_long_run_regime_occupancy(self):
        cfg = ScenarioConfig(40, 1, 30, seed=2)
        s = generate(cfg, SPREAD, RATE, daily=True)
        occ = np.bincount(s.regimes.ravel(), minlength=3) / s.regimes.size
        assert np.allclose(occ, GREECE.stationary.probs, atol=0.08)

    def test_regime_change_keeps_level_continuous(self):
        # a switch moves the anchor, not the level: daily log changes stay return-sized
        s = generate(small(n_regime_scenarios=4, horizon_years=10), SPREAD, RATE, daily=True)
        jumps = np.abs(np.diff(np.log(s.spreads), axis=1))
        switched = np.diff(s.regimes, axis=1) != 0
        assert switched.any()
        assert jumps[switched].max() < 0.6

    def test_index_generated_when_configured(self):
        idx = FactorModel.single(targets(100.0, 30.0, 0.03))
        s = generate(small(market_index=idx), SPREAD, RATE)
        assert s.index is not None and s.index.shape == s.spreads.shape


class TestRegimeOff:
    def test_single_regime(self):
        avg = averaged_targets(GREECE.targets, GREECE.trading_days)
        s = regime_off_variant(small(), avg, RATE)
        assert np.all(s.regimes == 0)

    def test_average_weights(self):
        a, b = targets(100.0, 10.0, 0.02), targets(300.0, 30.0, 0.04)
        avg = averaged_targets([a, b], [3, 1])
        assert avg.level_mean == pytest.approx(150.0)
        assert avg.level_stdev == pytest.approx(15.0)
        assert avg.return_stdev == pytest.approx(0.025)
        assert avg.start_level == avg.level_mean


class TestPersistence:
    def test_round_trip(self, tmp_path):
        s = generate(small(), SPREAD, RATE)
        save_scenarios(s, tmp_path / "c.bin")
        assert load_scenarios(tmp_path / "c.bin") == s

    def test_round_trip_with_index(self, tmp_path):
        s = generate(small(market_index=FactorModel.single(targets())), SPREAD, RATE)
        save_scenarios(s, tmp_path / "c.bin")
        assert load_scenarios(tmp_path / "c.bin") == s

    def test_rejects_foreign_and_truncated(self, tmp_path):
        s = generate(small(), SPREAD, RATE)
        p = tmp_path / "c.bin"
        save_scenarios(s, p)
        raw = p.read_bytes()
        p.write_bytes(raw[:-8])
        with pytest.raises(ValueError, match="truncated"):
            load_scenarios(p)
        p.write_bytes(b"NOTACACHE" + raw[9:])
        with pytest.raises(ValueError, match="not a scenario cache"):
            load_scenarios(p)

    def test_csv_export(self, tmp_path):
        s = generate(small(), SPREAD, RATE)
        export_csv(s, tmp_path / "s.csv", max_paths=2)
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0].startswith("scenario,outer,inner,step,rate,spread")
        assert len(lines) == 1 + 2 * 7
