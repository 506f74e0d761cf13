"""Compiled inner loops (numba, GIL released so chunks can run on threads)."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def srmr_log_levels(x0, k1, k2, sig, anchor, regime_table, outer, noise, every):
    """Log-level SRMR recursion; regimes are looked up per path via its outer index."""
    n, days = noise.shape
    rec = np.empty((n, days // every + 1))
    for i in range(n):
        x = x0[i]
        r = 0.0
        rec[i, 0] = x
        row = outer[i]
        for t in range(days):
            j = regime_table[row, t]
            r = r + k2[j] * (anchor[j] - x) - k1[j] * r + sig[j] * noise[i, t]
            x = x + r
            if (t + 1) % every == 0:
                rec[i, (t + 1) // every] = x
    return rec


@njit(cache=True, nogil=True)
def markov_paths(cum, initial, uniforms):
    n, steps = uniforms.shape
    s = cum.shape[1]
    out = np.empty((n, steps + 1), dtype=np.int64)
    for i in range(n):
        state = initial[i]
        out[i, 0] = state
        for t in range(steps):
            u = uniforms[i, t]
            k = 0
            while k < s - 1 and u >= cum[state, k]:
                k += 1
            state = k
            out[i, t + 1] = state
    return out
