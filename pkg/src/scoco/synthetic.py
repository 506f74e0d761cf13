"""Synthetic daily CDS histories with the per-regime statistics of a country preset.

The original market data is proprietary, so fixtures are simulated: each
regime segment runs its own calibrated SRMR process over the business days
between its dates, starting from the regime mean.
"""

from __future__ import annotations

import numpy as np

from . import rng as rngmod
from .presets import _TABLES, country
from .srmr_process import calibrate, simulate


def synthetic_history(name: str, seed: int = 0) -> tuple[np.ndarray, np.ndarray, list[np.datetime64]]:
    """(business dates, spread levels in bp, first date of every regime after the first)."""
    preset = country(name)
    dates, values, breaks = [], [], []
    for i, ((_, first, last, *_), targets) in enumerate(zip(_TABLES[preset.name], preset.targets)):
        days = np.arange(np.datetime64(first), np.datetime64(last) + 1)
        days = days[np.is_busday(days)]
        _, levels = simulate(calibrate(targets), targets.start_level, days.size - 1, rngmod.stream(seed, i))
        dates.append(days)
        values.append(levels[0])
        if i:
            breaks.append(days[0])
    return np.concatenate(dates), np.concatenate(values), breaks
