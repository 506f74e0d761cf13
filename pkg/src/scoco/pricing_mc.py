"""Monte Carlo present value of the S-CoCo and its par coupon.

Per path ``l``::

    PV_l = c * sum_{t=1..T} B_l(0, t) * paid_l(t) + B_l(0, T + deferral_l)

with ``B_l(0, t) = exp(-dt * sum_{u<t} r_u)``. Path averages use exactly rounded
sums, so results do not depend on path order or chunking.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.optimize import bisect

from .instrument import SCoCoSpec, StandstillSchedule, build_schedules
from .scenario_engine import ScenarioSet

__all__ = [
    "DiscountCurvePath",
    "ParRateResult",
    "PricingResult",
    "discount_factors",
    "par_rate",
    "par_rate_table",
    "price",
    "price_dual",
]


class ParRateUndefined(ValueError):
    pass


@dataclass(frozen=True)
class DiscountCurvePath:
    factors: np.ndarray  # (N, n + 1), factors[:, 0] == 1

    def between(self, t0: int, t1) -> np.ndarray:
        """``B(t0, t1)`` per path; ``t1`` may be a per-path array of steps."""
        rows = np.arange(self.factors.shape[0])
        return self.factors[rows, t1] / self.factors[:, t0]


def discount_factors(rates, dt: float) -> DiscountCurvePath:
    if not dt > 0:
        raise ValueError("dt must be positive")
    r = np.atleast_2d(np.asarray(rates, dtype=float))
    acc = np.zeros((r.shape[0], r.shape[1]))
    np.cumsum(r[:, :-1], axis=1, out=acc[:, 1:])
    return DiscountCurvePath(np.exp(-dt * acc))


def _mean_and_stderr(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    mean = math.fsum(x) / n
    if n < 2:
        return mean, 0.0
    dev = x - mean
    return mean, math.sqrt(math.fsum(dev * dev) / (n - 1) / n)


@dataclass(frozen=True)
class PricingResult:
    price: float
    standard_error: float
    coupon_pv: float
    principal_pv: float
    mean_standstills: float
    mean_deferral: float
    trigger_probability: float
    n_paths: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class _Legs:
    """Pathwise coupon annuity (per unit coupon) and principal PV."""

    annuity: np.ndarray
    principal: np.ndarray
    schedule: StandstillSchedule


def _legs(scenarios: ScenarioSet, spec: SCoCoSpec, schedule: StandstillSchedule | None, use_index: bool) -> _Legs:
    T = spec.maturity
    if scenarios.n_steps < spec.required_steps:
        raise ValueError(
            f"horizon too short: scenarios have {scenarios.n_steps} steps, "
            f"maturity plus maximum deferral needs {spec.required_steps}"
        )
    if schedule is None:
        index = scenarios.index[:, : T + 1] if use_index else None
        schedule = build_schedules(scenarios.spreads[:, : T + 1], spec, index)
    disc = discount_factors(scenarios.rates, scenarios.dt).factors
    paid = schedule.coupon_paid[:, 1:]
    annuity = np.sum(disc[:, 1 : T + 1] * paid, axis=1)
    principal = disc[np.arange(disc.shape[0]), T + schedule.deferral]
    return _Legs(annuity, principal, schedule)


def _result(legs: _Legs, coupon: float) -> PricingResult:
    cpn = coupon * legs.annuity
    pv = cpn + legs.principal
    p, se = _mean_and_stderr(pv)
    sch = legs.schedule
    counts = sch.n_market + sch.n_idiosyncratic
    return PricingResult(
        price=p,
        standard_error=se,
        coupon_pv=math.fsum(cpn) / pv.size,
        principal_pv=math.fsum(legs.principal) / pv.size,
        mean_standstills=float(np.mean(counts)),
        mean_deferral=float(np.mean(sch.deferral)),
        trigger_probability=float(np.mean(counts > 0)),
        n_paths=int(pv.size),
    )


def pathwise_values(scenarios: ScenarioSet, spec: SCoCoSpec, schedule: StandstillSchedule | None = None) -> np.ndarray:
    legs = _legs(scenarios, spec, schedule, spec.dual is not None)
    return spec.coupon * legs.annuity + legs.principal


def price(scenarios: ScenarioSet, spec: SCoCoSpec, schedule: StandstillSchedule | None = None) -> PricingResult:
    """Single-trigger price (a dual spec is priced on its spread trigger alone)."""
    if spec.dual is not None:
        spec = replace(spec, dual=None)
    return _result(_legs(scenarios, spec, schedule, False), spec.coupon)


def price_dual(scenarios: ScenarioSet, spec: SCoCoSpec, schedule: StandstillSchedule | None = None) -> PricingResult:
    if spec.dual is None:
        raise ValueError("spec has no dual trigger")
    if scenarios.index is None:
        raise ValueError("missing market index: dual pricing needs index paths")
    return _result(_legs(scenarios, spec, schedule, True), spec.coupon)


@dataclass(frozen=True)
class ParRateResult:
    per_period: float
    annualized: float
    bisection: float
    residual: float
    annuity: float
    principal_pv: float

    def to_dict(self) -> dict:
        return asdict(self)


def par_rate(scenarios: ScenarioSet, spec: SCoCoSpec, schedule: StandstillSchedule | None = None) -> ParRateResult:
    """Coupon with ``P0(c) = 1``, solved exactly (price is affine in c) and checked by bisection."""
    legs = _legs(scenarios, spec, schedule, spec.dual is not None)
    n = legs.annuity.size
    annuity = math.fsum(legs.annuity) / n
    principal = math.fsum(legs.principal) / n
    if annuity <= 0:
        raise ParRateUndefined("par rate undefined: every coupon is suspended on every path")
    if principal >= 1.0:
        raise ParRateUndefined(f"par rate undefined: principal PV {principal:.6g} >= 1 leaves no positive coupon")
    c = (1.0 - principal) / annuity

    def excess(x):
        return x * annuity + principal - 1.0

    hi = 2.0 * c + 1e-12
    c_bis = bisect(excess, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    residual = _result(legs, c).price - 1.0
    if abs(residual) >= 1e-10 or abs(excess(c_bis)) >= 1e-10:
        raise ArithmeticError(f"par-rate check failed: residual {residual:.3e}")
    periods = round(1.0 / scenarios.dt)
    return ParRateResult(c, c * periods, c_bis, residual, annuity, principal)


def par_rate_table(scenarios: ScenarioSet, spec: SCoCoSpec, thresholds) -> list[dict]:
    """Par coupon per threshold, plus the straight-bond (never triggered) reference."""
    rows = []
    for th in thresholds:
        s = spec.with_threshold(float(th))
        pr = par_rate(scenarios, s)
        res = price(scenarios, s.with_coupon(pr.per_period)) if s.dual is None else price_dual(scenarios, s.with_coupon(pr.per_period))
        rows.append({"threshold": float(th), "par_rate": pr.annualized, "par_rate_per_period": pr.per_period,
                     "trigger_probability": res.trigger_probability})
    straight = par_rate(scenarios, spec.with_threshold(math.inf))
    for r in rows:
        r["straight_par_rate"] = straight.annualized
        r["premium_bp"] = (r["par_rate"] - straight.annualized) * 1e4
    return rows
