"""Small distribution diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModeCheck:
    multimodal: bool
    peaks: tuple[float, float] | None  # bin centres of the separated pair
    trough_ratio: float  # trough height / lower peak height for that pair
    counts: np.ndarray
    edges: np.ndarray


def histogram_modes(x, bins: int = 40, trough_fraction: float = 0.8, min_peak_fraction: float = 0.05) -> ModeCheck:
    """Look for two histogram peaks separated by a trough at most
    ``trough_fraction`` of the lower peak; the deepest such pair is reported.

    Peaks are local maxima holding at least ``min_peak_fraction`` of the
    tallest bin, so stray tail bins do not count as modes.
    """
    counts, edges = np.histogram(np.asarray(x, dtype=float), bins=bins)
    centres = 0.5 * (edges[1:] + edges[:-1])
    padded = np.r_[-1, counts, -1]
    local_max = (counts >= padded[:-2]) & (counts >= padded[2:])
    peaks = np.flatnonzero(local_max & (counts >= min_peak_fraction * counts.max()) & (counts > 0))
    best = (np.inf, None)
    for a, i in enumerate(peaks):
        for j in peaks[a + 1:]:
            if j - i < 2:
                continue
            ratio = counts[i + 1 : j].min() / min(counts[i], counts[j])
            if ratio < best[0]:
                best = (ratio, (float(centres[i]), float(centres[j])))
    ratio, pair = best
    ok = pair is not None and ratio <= trough_fraction
    return ModeCheck(ok, pair if ok else None, float(ratio), counts, edges)
