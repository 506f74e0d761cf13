"""Counter-based random streams keyed by (seed, outer, inner, factor).

Every stream is an independent Philox generator derived from a
``SeedSequence`` spawn key, so draws do not depend on generation order,
chunking or thread count.
"""

from __future__ import annotations

import numpy as np

# factor ids
REGIME = 0
RATE_REGIME = 1
SPREAD = 2
RATE = 3
INDEX = 4
REGIME_START = 5
RATE_REGIME_START = 6
DIRICHLET = 7


def stream(seed: int, outer: int = 0, inner: int = 0, factor: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(outer), int(inner), int(factor)))
    return np.random.Generator(np.random.Philox(ss))
