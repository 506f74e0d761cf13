"""S-CoCo contract terms and per-scenario payment-standstill schedules.

A breach (spread >= threshold) on an eligible pricing date ``t`` opens the
interval ``{t, ..., t + K}`` clipped at maturity; dates inside an open interval
are not eligible. If the last interval reaches maturity and started at ``J``
with ``T - J < K``, the principal is deferred by ``T - J + 1`` periods.

With a dual trigger the market index decides the family: an index at or above
its threshold opens a market-wide interval of length ``K1`` (set Lambda),
otherwise an idiosyncratic interval of length ``K2`` (set Upsilon).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

__all__ = [
    "DualTrigger",
    "SCoCoSpec",
    "StandstillSchedule",
    "build_dual_schedule",
    "build_schedule",
    "build_schedules",
    "export_schedule_csv",
]

DEFAULT_STANDSTILL = 2

# families recorded per date
NONE, MARKET, IDIOSYNCRATIC = 0, 1, 2


@dataclass(frozen=True)
class DualTrigger:
    index_threshold: float
    market_periods: int  # K1, standstill when the whole market is stressed
    idiosyncratic_periods: int  # K2
    allow_short_idiosyncratic: bool = False

    def __post_init__(self):
        if self.market_periods < 1 or self.idiosyncratic_periods < 1:
            raise ValueError("standstill lengths must be >= 1")
        if self.idiosyncratic_periods <= self.market_periods and not self.allow_short_idiosyncratic:
            raise ValueError(
                "idiosyncratic standstill must be longer than the market-wide one "
                "(set allow_short_idiosyncratic to override)"
            )


@dataclass(frozen=True)
class SCoCoSpec:
    """Contract terms; ``maturity`` and standstill lengths are in pricing periods,
    ``coupon`` is per period and ``threshold`` is in basis points."""

    maturity: int
    coupon: float
    threshold: float
    standstill_periods: int = DEFAULT_STANDSTILL
    dual: DualTrigger | None = None

    def __post_init__(self):
        if self.maturity < 1:
            raise ValueError("maturity must be >= 1 period")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if self.standstill_periods < 1:
            raise ValueError("standstill_periods must be >= 1")
        if not math.isfinite(self.coupon):
            raise ValueError("coupon must be finite")

    @property
    def max_deferral(self) -> int:
        k = self.standstill_periods
        if self.dual is not None:
            k = max(self.dual.market_periods, self.dual.idiosyncratic_periods)
        return k

    @property
    def required_steps(self) -> int:
        """Pricing steps a scenario must cover: maturity plus the longest deferral."""
        return self.maturity + self.max_deferral

    def with_coupon(self, coupon: float) -> "SCoCoSpec":
        return replace(self, coupon=coupon)

    def with_threshold(self, threshold: float) -> "SCoCoSpec":
        return replace(self, threshold=threshold)


@dataclass(frozen=True)
class StandstillSchedule:
    """Standstill membership on dates ``0..T`` for each of N paths.

    ``family[l, t]`` is 0 outside standstills, 1 inside a market-wide (Lambda)
    interval and 2 inside an idiosyncratic (Upsilon) interval. Single-trigger
    schedules only use family 1.
    """

    family: np.ndarray
    deferral: np.ndarray
    n_market: np.ndarray
    n_idiosyncratic: np.ndarray

    def __post_init__(self):
        for name in ("family", "deferral", "n_market", "n_idiosyncratic"):
            getattr(self, name).setflags(write=False)

    @property
    def n_paths(self) -> int:
        return self.family.shape[0]

    @property
    def maturity(self) -> int:
        return self.family.shape[1] - 1

    @property
    def in_lambda(self) -> np.ndarray:
        return self.family == MARKET

    @property
    def in_upsilon(self) -> np.ndarray:
        return self.family == IDIOSYNCRATIC

    @property
    def coupon_paid(self) -> np.ndarray:
        """Product of the two family indicators: True where a coupon is due and paid."""
        return self.family == NONE

    def lambda_set(self, l: int = 0) -> set[int]:
        return set(np.flatnonzero(self.in_lambda[l]).tolist())

    def upsilon_set(self, l: int = 0) -> set[int]:
        return set(np.flatnonzero(self.in_upsilon[l]).tolist())

    def __eq__(self, other):
        if not isinstance(other, StandstillSchedule):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("family", "deferral", "n_market", "n_idiosyncratic")
        )

    __hash__ = None


def build_schedules(spreads, spec: SCoCoSpec, index=None) -> StandstillSchedule:
    """Schedules for a block of paths; ``spreads`` (and ``index``) are (N, >= T+1)."""
    s = np.atleast_2d(np.asarray(spreads, dtype=float))
    T = spec.maturity
    if s.shape[1] < T + 1:
        raise ValueError(f"paths have {s.shape[1] - 1} steps, maturity needs {T}")
    dual = spec.dual
    if dual is not None:
        if index is None:
            raise ValueError("dual trigger needs a market index path")
        v = np.atleast_2d(np.asarray(index, dtype=float))
        if v.shape[0] != s.shape[0] or v.shape[1] < T + 1:
            raise ValueError("index paths must match spread paths")
    n = s.shape[0]
    family = np.zeros((n, T + 1), dtype=np.int8)
    open_until = np.full(n, -1, dtype=np.int64)
    open_family = np.zeros(n, dtype=np.int8)
    start = np.full(n, -1, dtype=np.int64)
    length = np.zeros(n, dtype=np.int64)
    n_market = np.zeros(n, dtype=np.int64)
    n_idio = np.zeros(n, dtype=np.int64)
    k_market = spec.standstill_periods if dual is None else dual.market_periods
    for t in range(T + 1):
        hit = (t > open_until) & (s[:, t] >= spec.threshold)
        if dual is None:
            market, idio = hit, None
        else:
            high = v[:, t] >= dual.index_threshold
            market, idio = hit & high, hit & ~high
        open_until[market] = t + k_market
        open_family[market] = MARKET
        length[market] = k_market
        n_market += market
        if idio is not None:
            open_until[idio] = t + dual.idiosyncratic_periods
            open_family[idio] = IDIOSYNCRATIC
            length[idio] = dual.idiosyncratic_periods
            n_idio += idio
        start[hit] = t
        inside = t <= open_until
        family[inside, t] = open_family[inside]
    covers_end = open_until >= T
    gap = T - start
    deferral = np.where(covers_end & (start >= 0) & (gap < length), gap + 1, 0)
    return StandstillSchedule(family, deferral.astype(np.int64), n_market, n_idio)


def build_schedule(spreads, spec: SCoCoSpec) -> StandstillSchedule:
    """Single-trigger schedule for one path (a (1, T+1) schedule)."""
    return build_schedules(np.asarray(spreads, dtype=float)[None, :], replace(spec, dual=None))


def build_dual_schedule(spreads, index, spec: SCoCoSpec) -> StandstillSchedule:
    if spec.dual is None:
        raise ValueError("spec has no dual trigger")
    return build_schedules(np.asarray(spreads, dtype=float)[None, :], spec, np.asarray(index, dtype=float)[None, :])


def export_schedule_csv(schedule: StandstillSchedule, path: str | Path) -> None:
    names = {NONE: "", MARKET: "lambda", IDIOSYNCRATIC: "upsilon"}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "step", "in_standstill", "family"])
        for l in range(schedule.n_paths):
            for t in range(schedule.maturity + 1):
                f = int(schedule.family[l, t])
                w.writerow([l, t, int(f != NONE), names[f]])
