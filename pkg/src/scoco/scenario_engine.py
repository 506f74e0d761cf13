"""Joint scenario generation: regime paths (outer) x spread, rate and index paths (inner).

All factors run on a daily grid and are recorded on the pricing grid. Each
factor is an SRMR process in log-level form whose parameters follow a
regime chain; the spread and the short rate have separate chains.
"""

from __future__ import annotations

import csv
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng as rngmod
from ._kernels import srmr_log_levels
from .regime_model import TransitionMatrix, simulate_regime_paths, stationary_of
from .srmr_process import AnchoredParams, CorrelationSpec, MomentTargets

__all__ = [
    "FactorModel",
    "NoiseBank",
    "ScenarioConfig",
    "ScenarioPath",
    "ScenarioSet",
    "averaged_targets",
    "draw_noise",
    "export_csv",
    "generate",
    "load_scenarios",
    "regime_off_variant",
    "save_scenarios",
    "testbed_config",
]

CACHE_MAGIC = b"SCOCOSCN"
CACHE_VERSION = 1


@dataclass(frozen=True)
class FactorModel:
    """Regime-switching SRMR factor.

    The simulated positive level maps to output units as
    ``(level - shift) * scale``; the short rate uses a shift (percent) so
    negative yields stay representable, and ``scale = 0.01`` to get decimals.
    ``initial`` is a regime id or ``"stationary"`` (drawn per outer scenario).
    ``start_level`` defaults to the long-run mean of the initial regime.
    """

    matrix: TransitionMatrix
    calibrations: tuple[AnchoredParams, ...]
    initial: int | str = "stationary"
    start_level: float | None = None
    shift: float = 0.0
    scale: float = 1.0
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        m = self.matrix if isinstance(self.matrix, TransitionMatrix) else TransitionMatrix(self.matrix)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "calibrations", tuple(self.calibrations))
        n = m.n_states
        if len(self.calibrations) < n:
            name = self.labels[len(self.calibrations)] if len(self.labels) > len(self.calibrations) else ""
            raise ValueError(f"missing calibration for regime {len(self.calibrations)} {name}".rstrip())
        if len(self.calibrations) > n:
            raise ValueError(f"{len(self.calibrations)} calibrations for {n} regimes")
        if self.initial != "stationary" and not (isinstance(self.initial, (int, np.integer)) and 0 <= self.initial < n):
            raise ValueError(f"initial regime must be 'stationary' or 0..{n - 1}, got {self.initial!r}")
        if self.start_level is not None and not self.start_level > 0:
            raise ValueError("start_level must be positive")

    @classmethod
    def single(cls, targets: MomentTargets, shift: float = 0.0, scale: float = 1.0) -> "FactorModel":
        return cls(TransitionMatrix(np.ones((1, 1))), (AnchoredParams.from_targets(targets),), 0,
                   targets.start_level, shift, scale)

    @property
    def n_regimes(self) -> int:
        return self.matrix.n_states

    def coefficient_arrays(self):
        k1 = np.array([c.params.k1 for c in self.calibrations])
        k2 = np.array([c.params.k2 for c in self.calibrations])
        sig = np.array([c.params.sigma for c in self.calibrations])
        anchor = np.array([c.log_anchor for c in self.calibrations])
        return k1, k2, sig, anchor

    def initial_level(self, regime: int) -> float:
        return self.start_level if self.start_level is not None else self.calibrations[regime].level_mean


@dataclass(frozen=True)
class ScenarioConfig:
    n_regime_scenarios: int
    n_paths_per_regime: int
    horizon_years: float
    periods_per_year: int = 2
    days_per_year: int = 252
    seed: int = 0
    correlation: CorrelationSpec = field(default_factory=CorrelationSpec)
    market_index: FactorModel | None = None
    index_correlation: float = 0.0
    chunk_size: int = 1024
    threads: int = 1

    def __post_init__(self):
        if self.n_regime_scenarios < 1 or self.n_paths_per_regime < 1:
            raise ValueError("scenario counts must be >= 1")
        if not self.horizon_years > 0:
            raise ValueError("horizon must be positive")
        if self.days_per_year % self.periods_per_year:
            raise ValueError("pricing step must divide the daily grid evenly")
        steps = self.horizon_years * self.periods_per_year
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("horizon must be a whole number of pricing periods")
        if not -1.0 <= self.index_correlation <= 1.0:
            raise ValueError("index_correlation must lie in [-1, 1]")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon_years * self.periods_per_year))

    @property
    def days_per_step(self) -> int:
        return self.days_per_year // self.periods_per_year

    @property
    def n_days(self) -> int:
        return self.n_steps * self.days_per_step

    @property
    def n_paths(self) -> int:
        return self.n_regime_scenarios * self.n_paths_per_regime


@dataclass(frozen=True)
class ScenarioPath:
    rates: np.ndarray
    spreads: np.ndarray
    regimes: np.ndarray
    index: np.ndarray | None = None


@dataclass(frozen=True)
class ScenarioSet:
    """Arrays of shape (N, n_steps + 1); path ``l`` is row ``l``, each with weight 1/N.

    ``dt`` is the pricing step in years.
    """

    rates: np.ndarray
    spreads: np.ndarray
    regimes: np.ndarray
    rate_regimes: np.ndarray
    outer: np.ndarray
    inner: np.ndarray
    dt: float
    index: np.ndarray | None = None

    def __post_init__(self):
        shape = self.rates.shape
        for name in ("spreads", "regimes", "rate_regimes"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} shape {getattr(self, name).shape} != rates shape {shape}")
        if self.index is not None and self.index.shape != shape:
            raise ValueError("index shape mismatch")
        if np.any(self.spreads <= 0):
            raise ValueError("spreads must be positive")
        for name in ("rates", "spreads", "regimes", "rate_regimes", "outer", "inner", "index"):
            a = getattr(self, name)
            if a is not None:
                a.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.rates.shape[0]

    @property
    def n_steps(self) -> int:
        return self.rates.shape[1] - 1

    @property
    def probability(self) -> float:
        return 1.0 / self.n_paths

    def path(self, l: int) -> ScenarioPath:
        return ScenarioPath(
            self.rates[l], self.spreads[l], self.regimes[l], None if self.index is None else self.index[l]
        )

    def with_index(self, index: np.ndarray) -> "ScenarioSet":
        return replace(self, index=np.array(index, dtype=float))

    def __eq__(self, other):
        if not isinstance(other, ScenarioSet):
            return NotImplemented
        same = self.dt == other.dt and (self.index is None) == (other.index is None)
        names = ["rates", "spreads", "regimes", "rate_regimes", "outer", "inner"]
        if self.index is not None:
            names.append("index")
        return same and all(np.array_equal(getattr(self, n), getattr(other, n)) for n in names)

    __hash__ = None


# --------------------------------------------------------------------------
# simulation kernels


def _regime_paths(model: FactorModel, cfg: ScenarioConfig, factor: int, start_factor: int) -> np.ndarray:
    """One daily regime path per outer scenario, shape (n_outer, n_days + 1)."""
    n = cfg.n_regime_scenarios
    out = np.empty((n, cfg.n_days + 1), dtype=np.int64)
    if model.n_regimes == 1:
        out[:] = 0
        return out
    if model.initial == "stationary":
        pi = stationary_of(model.matrix).probs
        cum = np.cumsum(pi)
        cum[-1] = 1.0
    for o in range(n):
        g = rngmod.stream(cfg.seed, o, 0, factor)
        if model.initial == "stationary":
            init = int(np.searchsorted(cum, rngmod.stream(cfg.seed, o, 0, start_factor).random(), side="right"))
        else:
            init = int(model.initial)
        out[o] = simulate_regime_paths(model.matrix, np.array([init]), g.random((1, cfg.n_days)))[0]
    return out


def _noise(cfg: ScenarioConfig, outer: np.ndarray, inner: np.ndarray, factor: int) -> np.ndarray:
    z = np.empty((outer.size, cfg.n_days))
    for i, (o, n) in enumerate(zip(outer, inner)):
        z[i] = rngmod.stream(cfg.seed, o, n, factor).standard_normal(cfg.n_days)
    return z


def _run_factor(model: FactorModel, regime_table: np.ndarray, outer: np.ndarray, noise: np.ndarray, every: int) -> np.ndarray:
    """Log-level SRMR recursion on daily noise; returns output-unit values every ``every`` days."""
    k1, k2, sig, anchor = model.coefficient_arrays()
    x0 = np.log([model.initial_level(int(j)) for j in regime_table[outer, 0]])
    rec = srmr_log_levels(x0, k1, k2, sig, anchor, regime_table, outer.astype(np.int64), noise, every)
    return (np.exp(rec) - model.shift) * model.scale


@dataclass(frozen=True)
class NoiseBank:
    """Pre-drawn daily shocks for every path, reusable across runs with the same config."""

    spread: np.ndarray
    rate: np.ndarray
    index: np.ndarray | None = None


def draw_noise(config: ScenarioConfig) -> NoiseBank:
    outer = np.repeat(np.arange(config.n_regime_scenarios), config.n_paths_per_regime)
    inner = np.tile(np.arange(config.n_paths_per_regime), config.n_regime_scenarios)
    idx = _noise(config, outer, inner, rngmod.INDEX) if config.market_index is not None else None
    return NoiseBank(_noise(config, outer, inner, rngmod.SPREAD), _noise(config, outer, inner, rngmod.RATE), idx)


def _chunk(cfg, spread, rate, spread_reg, rate_reg, outer, inner, every, bank=None, sl=None):
    def shocks(factor, name):
        return getattr(bank, name)[sl] if bank is not None else _noise(cfg, outer, inner, factor)

    eps_s = shocks(rngmod.SPREAD, "spread")
    rho = cfg.correlation.rho
    eps_r = shocks(rngmod.RATE, "rate")
    if rho != 0.0:
        eps_r = rho * eps_s + math.sqrt(1.0 - rho * rho) * eps_r
    out = {
        "spreads": _run_factor(spread, spread_reg, outer, eps_s, every),
        "rates": _run_factor(rate, rate_reg, outer, eps_r, every),
    }
    if cfg.market_index is not None:
        eps_v = shocks(rngmod.INDEX, "index")
        rv = cfg.index_correlation
        if rv != 0.0:
            eps_v = rv * eps_s + math.sqrt(1.0 - rv * rv) * eps_v
        zeros = np.zeros((cfg.n_regime_scenarios, cfg.n_days + 1), dtype=np.int64)
        out["index"] = _run_factor(cfg.market_index, zeros, outer, eps_v, every)
    return out


def generate(
    config: ScenarioConfig,
    spread_model: FactorModel,
    rate_model: FactorModel,
    daily: bool = False,
    noise: NoiseBank | None = None,
) -> ScenarioSet:
    """Simulate all (outer, inner) paths and record them on the pricing grid.

    With ``daily=True`` every simulated day is kept (and ``dt`` is one day),
    which is how the down-sampling can be audited. ``noise`` must come from
    ``draw_noise`` with the same config; it gives the same result as drawing afresh.
    """
    cfg = config
    every = 1 if daily else cfg.days_per_step
    spread_reg = _regime_paths(spread_model, cfg, rngmod.REGIME, rngmod.REGIME_START)
    rate_reg = _regime_paths(rate_model, cfg, rngmod.RATE_REGIME, rngmod.RATE_REGIME_START)
    outer = np.repeat(np.arange(cfg.n_regime_scenarios), cfg.n_paths_per_regime)
    inner = np.tile(np.arange(cfg.n_paths_per_regime), cfg.n_regime_scenarios)
    bounds = range(0, outer.size, cfg.chunk_size)

    def work(a):
        sl = slice(a, a + cfg.chunk_size)
        return _chunk(cfg, spread_model, rate_model, spread_reg, rate_reg, outer[sl], inner[sl], every, noise, sl)

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            parts = list(ex.map(work, bounds))
    else:
        parts = [work(a) for a in bounds]

    def cat(name):
        return np.concatenate([p[name] for p in parts])

    grid = slice(None, None, every)
    dt = 1.0 / (cfg.days_per_year if daily else cfg.periods_per_year)
    return ScenarioSet(
        rates=cat("rates"),
        spreads=cat("spreads"),
        regimes=spread_reg[outer][:, grid].astype(np.int16),
        rate_regimes=rate_reg[outer][:, grid].astype(np.int16),
        outer=outer,
        inner=inner,
        dt=dt,
        index=cat("index") if cfg.market_index is not None else None,
    )


def averaged_targets(targets: Sequence[MomentTargets], weights: Sequence[float], start_level: float | None = None) -> MomentTargets:
    """Weighted average of per-regime targets, each moment averaged separately.

    Used for the no-switching variant: the average regime, not the pooled
    sample, so between-regime dispersion does not inflate the level stdev.
    """
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()

    def avg(name):
        return float(np.dot(w, [getattr(t, name) for t in targets]))

    mean = avg("level_mean")
    return MomentTargets(mean, avg("level_stdev"), avg("return_stdev"), avg("smoothness"),
                         mean if start_level is None else start_level)


def regime_off_variant(config: ScenarioConfig, fixed_targets: MomentTargets, rate_model: FactorModel) -> ScenarioSet:
    """Single-regime spread dynamics calibrated on ``fixed_targets``."""
    return generate(config, FactorModel.single(fixed_targets), rate_model)


def testbed_config(name: str, base: ScenarioConfig) -> ScenarioConfig:
    """Outer/inner counts of the regime-effect test beds (R-OFF, R-1, R-100)."""
    sizes = {"R-OFF": (1, 5000), "R-1": (1, 5000), "R-100": (100, 1000)}
    if name not in sizes:
        raise ValueError(f"unknown test bed {name!r}; choose from {sorted(sizes)}")
    n_outer, n_inner = sizes[name]
    return replace(base, n_regime_scenarios=n_outer, n_paths_per_regime=n_inner)


# --------------------------------------------------------------------------
# persistence
#
# header: magic(8) version(u4) n_paths(u8) n_steps(u8) dt(f8) has_index(u1)
# body, path-major float64: for each path, rates, spreads, [index],
#   regimes, rate_regimes, then outer, inner; (n_steps + 1) values per series.

_HEADER = struct.Struct("<8sIQQdB")


def save_scenarios(s: ScenarioSet, path: str | Path) -> None:
    has_index = s.index is not None
    cols = [s.rates, s.spreads] + ([s.index] if has_index else []) + [s.regimes, s.rate_regimes]
    body = np.concatenate(
        [np.asarray(c, dtype="<f8") for c in cols] + [s.outer[:, None].astype("<f8"), s.inner[:, None].astype("<f8")],
        axis=1,
    )
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, s.n_paths, s.n_steps, s.dt, int(has_index)))
        fh.write(np.ascontiguousarray(body).tobytes())


def load_scenarios(path: str | Path) -> ScenarioSet:
    raw = Path(path).read_bytes()
    magic, version, n, steps, dt, has_index = _HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC:
        raise ValueError(f"{path}: not a scenario cache")
    if version != CACHE_VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    m = steps + 1
    n_series = 5 if has_index else 4
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    width = n_series * m + 2
    if body.size != n * width:
        raise ValueError(f"{path}: truncated cache ({body.size} values, expected {n * width})")
    body = body.reshape(n, width)
    blocks = [body[:, i * m:(i + 1) * m].copy() for i in range(n_series)]
    if has_index:
        rates, spreads, index, reg, rreg = blocks
    else:
        (rates, spreads, reg, rreg), index = blocks, None
    return ScenarioSet(
        rates=rates,
        spreads=spreads,
        regimes=reg.astype(np.int16),
        rate_regimes=rreg.astype(np.int16),
        outer=body[:, -2].astype(np.int64),
        inner=body[:, -1].astype(np.int64),
        dt=dt,
        index=index,
    )


def export_csv(s: ScenarioSet, path: str | Path, max_paths: int | None = None) -> None:
    n = s.n_paths if max_paths is None else min(max_paths, s.n_paths)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "outer", "inner", "step", "rate", "spread", "index", "regime", "rate_regime"])
        for l in range(n):
            for t in range(s.n_steps + 1):
                w.writerow([
                    l, int(s.outer[l]), int(s.inner[l]), t, repr(float(s.rates[l, t])), repr(float(s.spreads[l, t])),
                    "" if s.index is None else repr(float(s.index[l, t])), int(s.regimes[l, t]), int(s.rate_regimes[l, t]),
                ])
