from __future__ import annotations

import numpy as np
import pytest

from scoco.scenario_engine import ScenarioSet


def make_set(rates, spreads, dt: float = 0.5, index=None) -> ScenarioSet:
    """Hand-built scenario set; scalars broadcast against the other array."""
    r = np.atleast_2d(np.asarray(rates, dtype=float))
    s = np.atleast_2d(np.asarray(spreads, dtype=float))
    r, s = np.broadcast_arrays(r, s)
    r, s = r.copy(), s.copy()
    n = r.shape[0]
    zeros = np.zeros(r.shape, dtype=np.int16)
    ix = None if index is None else np.broadcast_to(np.asarray(index, dtype=float), r.shape).copy()
    return ScenarioSet(r, s, zeros, zeros.copy(), np.zeros(n, dtype=np.int64), np.arange(n), dt, ix)


@pytest.fixture
def scenario_factory():
    return make_set


ACCEPTANCE: list[str] = []


def report(label: str, ok: bool, detail: str) -> bool:
    """Record one acceptance line; printed together at the end of the session."""
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
