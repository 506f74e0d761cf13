"""State-contingent S-CoCo prices by least-squares Monte Carlo.

Working backward from maturity, the discounted next-step value is regressed
on the short rate (powers up to ``rate_terms - 1``) and the coupon indicator.
The fitted value at a horizon is the clean price conditional on that path's
state. There is no exercise decision, so every path enters every regression.

At maturity a path pays ``1 + c`` unless maturity falls inside a standstill;
then it holds a zero-coupon claim on the deferred principal, itself valued by
a rate-only backward regression from ``T + deferral`` to ``T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr, solve_triangular

from .instrument import SCoCoSpec, StandstillSchedule, build_schedules
from .pricing_mc import price as mc_price, price_dual as mc_price_dual
from .scenario_engine import ScenarioSet

__all__ = [
    "BasisSpec",
    "LSMResult",
    "PriceDistribution",
    "RegressionError",
    "RegressionStage",
    "lsm_price",
    "mape_vs_mc",
    "nested_zcb",
]

RANK_TOL = 1e-10
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class RegressionError(RuntimeError):
    pass


@dataclass(frozen=True)
class BasisSpec:
    """``rate_terms`` = M gives rate columns ``1, r, ..., r^(M-1)``; the indicator enters linearly."""

    rate_terms: int = 2
    include_indicator: bool = True

    def __post_init__(self):
        if not 1 <= self.rate_terms <= 5:
            raise ValueError("rate_terms must be in 1..5")

    @property
    def rate_degree(self) -> int:
        return self.rate_terms - 1

    @property
    def size(self) -> int:
        return self.rate_terms + int(self.include_indicator)

    def column_names(self) -> list[str]:
        names = ["1"] + [f"r^{k}" if k > 1 else "r" for k in range(1, self.rate_terms)]
        return names + (["indicator"] if self.include_indicator else [])


@dataclass(frozen=True)
class RegressionStage:
    step: int
    coefficients: np.ndarray  # on raw (unstandardised) columns, NaN for dropped ones
    r_squared: float
    residual_stdev: float
    orthogonality: float  # max |X'e| / N on the standardised design
    rate_terms_used: int


@dataclass(frozen=True)
class PriceDistribution:
    horizon: int
    prices: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.prices))

    @property
    def median(self) -> float:
        return float(np.median(self.prices))

    @property
    def stdev(self) -> float:
        return float(np.std(self.prices))

    @property
    def quantiles(self) -> dict[float, float]:
        q = np.quantile(self.prices, QUANTILES)
        return {p: float(v) for p, v in zip(QUANTILES, q)}

    def summary(self) -> dict:
        q = self.quantiles
        return {
            "horizon": self.horizon,
            "n": int(self.prices.size),
            "mean": self.mean,
            "median": self.median,
            "stdev": self.stdev,
            "q05": q[0.05],
            "q25": q[0.25],
            "q75": q[0.75],
            "q95": q[0.95],
        }


@dataclass(frozen=True)
class LSMResult:
    root_price: float
    distributions: dict[int, PriceDistribution]
    stages: list[RegressionStage]
    degradations: list[str] = field(default_factory=list)

    @property
    def max_orthogonality(self) -> float:
        return max((s.orthogonality for s in self.stages), default=0.0)


def _design(rates: np.ndarray, indicator: np.ndarray | None, rate_terms: int):
    """Raw columns and their standardised version; zero-variance columns are removed."""
    cols = [rates**k for k in range(1, rate_terms)]
    if indicator is not None:
        cols.append(indicator.astype(float))
    raw = np.column_stack([np.ones_like(rates)] + cols) if cols else np.ones((rates.size, 1))
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    keep = np.r_[True, std[1:] > 1e-14 * np.maximum(1.0, np.abs(mean[1:]))]
    z = raw.copy()
    z[:, 1:] = (raw[:, 1:] - mean[1:]) / np.where(std[1:] > 0, std[1:], 1.0)
    return raw, z[:, keep], keep, mean, std


def _regress(y, rates, indicator, rate_terms, step, degradations):
    """Least squares via pivoted QR; drops the highest rate power on rank deficiency."""
    terms = rate_terms
    while True:
        raw, z, keep, mean, std = _design(rates, indicator, terms)
        q, r, piv = qr(z, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        rank = int(np.sum(diag > RANK_TOL * diag[0])) if diag.size else 0
        if rank == z.shape[1]:
            break
        if terms <= 2:
            raise RegressionError(f"step {step}: design still rank deficient with rate degree {terms - 1}")
        degradations.append(f"step {step}: rank {rank} < {z.shape[1]}, dropped r^{terms - 1}")
        terms -= 1
    beta_p = solve_triangular(r, q.T @ y)
    beta_z = np.empty_like(beta_p)
    beta_z[piv] = beta_p
    fitted = z @ beta_z
    resid = y - fitted
    n = y.size
    ortho = float(np.max(np.abs(z.T @ resid)) / n)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    # back to raw columns: z_k = (x_k - m_k) / s_k
    full = np.full(keep.size, np.nan)
    idx = np.flatnonzero(keep)
    slopes = beta_z[1:] / std[idx[1:]]
    full[idx[1:]] = slopes
    full[0] = beta_z[0] - float(np.sum(slopes * mean[idx[1:]]))
    stage = RegressionStage(step, full, r2, float(np.std(resid)), ortho, terms)
    return fitted, stage


def nested_zcb(
    scenarios: ScenarioSet,
    maturity: int,
    deferrals,
    basis: BasisSpec | None = None,
    degradations: list[str] | None = None,
) -> np.ndarray:
    """Conditional value at ``maturity`` of 1 paid at ``maturity + deferral``, per path.

    Each distinct deferral gets its own rate-only backward regression over all
    paths; paths without deferral get exactly 1.
    """
    basis = basis or BasisSpec()
    d = np.asarray(deferrals, dtype=np.int64)
    if np.any(d < 0):
        raise ValueError("deferrals must be non-negative")
    if maturity + int(d.max(initial=0)) > scenarios.n_steps:
        raise ValueError("scenario horizon does not cover the deferred principal")
    out = np.ones(scenarios.n_paths)
    log = degradations if degradations is not None else []
    growth = np.exp(-scenarios.rates * scenarios.dt)
    for lag in sorted(set(d[d > 0].tolist())):
        value = np.ones(scenarios.n_paths)
        for t in range(maturity + lag - 1, maturity - 1, -1):
            y = value * growth[:, t]
            value, _ = _regress(y, scenarios.rates[:, t], None, basis.rate_terms, t, log)
        out[d == lag] = value[d == lag]
    return out


def lsm_price(
    scenarios: ScenarioSet,
    spec: SCoCoSpec,
    basis: BasisSpec | None = None,
    horizons=(),
    schedule: StandstillSchedule | None = None,
) -> LSMResult:
    basis = basis or BasisSpec()
    T = spec.maturity
    horizons = sorted(set(int(h) for h in horizons))
    if any(not 1 <= h < T for h in horizons):
        raise ValueError(f"horizons must lie in 1..{T - 1}")
    if scenarios.n_steps < spec.required_steps:
        raise ValueError("horizon too short for maturity plus maximum deferral")
    if schedule is None:
        index = scenarios.index[:, : T + 1] if spec.dual is not None else None
        schedule = build_schedules(scenarios.spreads[:, : T + 1], spec, index)
    paid = schedule.coupon_paid
    degradations: list[str] = []
    zcb = nested_zcb(scenarios, T, np.where(paid[:, T], 0, schedule.deferral), basis, degradations)
    cash = np.where(paid[:, T], 1.0 + spec.coupon, zcb)
    growth = np.exp(-scenarios.rates * scenarios.dt)
    stages, dists = [], {}
    ind = paid if basis.include_indicator else None
    for t in range(T - 1, 0, -1):
        y = cash * growth[:, t]
        fitted, stage = _regress(y, scenarios.rates[:, t], None if ind is None else ind[:, t], basis.rate_terms, t,
                                 degradations)
        stages.append(stage)
        if t in horizons:
            dists[t] = PriceDistribution(t, fitted)
        cash = fitted + spec.coupon * paid[:, t]
    root = math.fsum(cash * growth[:, 0]) / cash.size
    return LSMResult(root, dists, stages[::-1], degradations)


def mape_vs_mc(scenarios: ScenarioSet, spec: SCoCoSpec, basis: BasisSpec) -> dict:
    """Absolute percentage gap between the LSM root price and the plain MC price."""
    res = lsm_price(scenarios, spec, basis)
    mc = (mc_price_dual if spec.dual is not None else mc_price)(scenarios, spec).price
    return {
        "basis": basis.column_names(),
        "lsm": res.root_price,
        "mc": mc,
        "ape": abs(res.root_price - mc) / mc,
        "max_orthogonality": res.max_orthogonality,
        "degradations": res.degradations,
    }
