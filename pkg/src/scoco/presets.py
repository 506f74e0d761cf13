"""Built-in calibrations: per-regime CDS statistics for three sovereigns and a synthetic AAA short rate.

Regime rows carry (label, first day, last day, spread mean bp, spread stdev bp,
daily return stdev in percent). Smoothness is not part of the published
statistics, so it is set as a multiple of the return variance
(``DEFAULT_SMOOTHNESS_RATIO``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .regime_model import RegimeSpec, StationaryDistribution, TransitionMatrix, default_eigenvalues, estimate_max_entropy
from .scenario_engine import FactorModel
from .srmr_process import AnchoredParams, MomentTargets

DEFAULT_SMOOTHNESS_RATIO = 0.25

_TABLES = {
    "germany": [
        ("R1", "2007-12-21", "2009-03-13", 22.22, 23.54, 5.48),
        ("R2", "2009-03-16", "2011-06-20", 31.69, 8.85, 5.48),
        ("R3", "2011-06-21", "2012-09-12", 45.60, 13.98, 6.24),
        ("R4", "2012-09-13", "2014-12-02", 14.64, 3.73, 3.95),
        ("R5", "2014-12-03", "2016-03-18", 8.25, 1.93, 6.31),
    ],
    "greece": [
        ("tranquil", "2007-12-14", "2010-04-20", 146.09, 103.90, 4.45),
        ("turbulent", "2010-04-21", "2011-07-06", 980.27, 363.36, 5.20),
        ("crisis", "2011-07-07", "2012-02-22", 5770.43, 2917.45, 8.05),
    ],
    "italy": [
        ("R1", "2007-12-14", "2010-03-29", 79.71, 45.48, 5.01),
        ("R2", "2010-03-30", "2011-07-07", 137.69, 28.54, 6.51),
        ("R3", "2011-07-08", "2012-10-02", 361.94, 68.99, 4.94),
        ("R4", "2012-10-03", "2013-12-27", 203.73, 26.66, 2.91),
        ("R5", "2013-12-30", "2016-03-18", 97.31, 15.82, 3.67),
    ],
}

# Greece has a reference steady state; the others come from trading-day counts
_STATIONARY = {"greece": (0.5612, 0.2888, 0.15)}
_EIGENVALUES = {"greece": (0.999, 0.998)}


@dataclass(frozen=True)
class CountryPreset:
    name: str
    regimes: tuple[RegimeSpec, ...]
    targets: tuple[MomentTargets, ...]
    stationary: StationaryDistribution
    eigenvalues: np.ndarray
    trading_days: np.ndarray

    def transition_matrix(self) -> TransitionMatrix:
        return estimate_max_entropy(self.stationary, self.eigenvalues)

    def spread_factor(self, matrix: TransitionMatrix | None = None, initial="stationary", start_level=None) -> FactorModel:
        m = self.transition_matrix() if matrix is None else matrix
        return FactorModel(
            m,
            tuple(AnchoredParams.from_targets(t) for t in self.targets),
            initial=initial,
            start_level=start_level,
            labels=tuple(r.label for r in self.regimes),
        )


def country(name: str, smoothness_ratio: float = DEFAULT_SMOOTHNESS_RATIO) -> CountryPreset:
    key = name.lower()
    if key not in _TABLES:
        raise ValueError(f"unknown country preset {name!r}; choose from {sorted(_TABLES)}")
    rows = _TABLES[key]
    days = np.array([np.busday_count(a, np.datetime64(b) + 1) for _, a, b, *_ in rows], dtype=float)
    specs, targets = [], []
    for i, (label, _, _, mean, sd, ret_pct) in enumerate(rows):
        ret = ret_pct / 100.0
        specs.append(RegimeSpec(i, mean, sd, ret, label))
        targets.append(MomentTargets(mean, sd, ret, smoothness_ratio * ret * ret, mean))
    pi = _STATIONARY.get(key)
    stationary = StationaryDistribution(pi) if pi else StationaryDistribution.normalized(days)
    lam = np.asarray(_EIGENVALUES.get(key, default_eigenvalues(len(rows))), dtype=float)
    return CountryPreset(key, tuple(specs), tuple(targets), stationary, lam, days)


# Two-regime short rate in percent, shifted by 1 point so the level stays positive.
RATE_SHIFT = 1.0
_RATE_REGIMES = [
    # mean %, stdev %, daily return stdev of the shifted level; chosen so the
    # in-regime level half-life is about two years
    (3.0, 0.6, 0.0020),
    (0.5, 0.4, 0.0033),
]
RATE_STATIONARY = (0.45, 0.55)
RATE_EIGENVALUE = 0.999


def rate_factor(initial="stationary", smoothness_ratio: float = DEFAULT_SMOOTHNESS_RATIO, regimes=None,
                stationary=None, eigenvalue: float | None = None) -> FactorModel:
    """Synthetic AAA-like short rate; long-run average about 1.6% a year.

    ``regimes`` replaces the built-in (mean %, stdev %, daily return stdev) rows.
    """
    rows = _RATE_REGIMES if regimes is None else regimes
    cals = []
    for mean, sd, ret in rows:
        level = mean + RATE_SHIFT
        if not level > 0:
            raise ValueError(f"rate regime mean {mean}% is below the -{RATE_SHIFT}% shift")
        cals.append(AnchoredParams.from_targets(MomentTargets(level, sd, ret, smoothness_ratio * ret * ret, level)))
    if len(rows) == 1:
        m = TransitionMatrix(np.ones((1, 1)))
    else:
        pi = RATE_STATIONARY if stationary is None else stationary
        lam = (RATE_EIGENVALUE if eigenvalue is None else eigenvalue,) * (len(rows) - 1)
        m = estimate_max_entropy(StationaryDistribution.normalized(pi), lam)
    labels = ("high", "low") if regimes is None else tuple(f"R{i + 1}" for i in range(len(rows)))
    return FactorModel(m, tuple(cals), initial=initial, shift=RATE_SHIFT, scale=0.01, labels=labels)


def flat_rate_factor(rate_decimal: float) -> FactorModel:
    """Numerically constant short rate (zero diffusion, started on its fixed point)."""
    level = rate_decimal * 100.0 + RATE_SHIFT
    from .srmr_process import SRMRParams

    # sigma = 0 and k0 = 0 with start at the anchor: the recursion never moves
    p = SRMRParams(k0=0.0, k1=0.5, k2=0.01, sigma=0.0)
    return FactorModel(TransitionMatrix(np.ones((1, 1))), (AnchoredParams(p, level),), 0, level, RATE_SHIFT, 0.01)


def index_factor(mean: float = 100.0, stdev: float = 30.0, return_stdev: float = 0.03,
                 smoothness_ratio: float = DEFAULT_SMOOTHNESS_RATIO) -> FactorModel:
    """Single-regime market-wide credit index for the dual trigger."""
    return FactorModel.single(MomentTargets(mean, stdev, return_stdev, smoothness_ratio * return_stdev**2, mean))
