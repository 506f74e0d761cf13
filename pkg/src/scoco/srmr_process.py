"""Mean-reverting spread-return (SRMR) process: moments, calibration, simulation.

The return ``r`` mean-reverts, and its running sum ``C`` drives the level
``S = S0 * exp(C)``::

    dr = (k0 - k1 * r - k2 * C) * dt + sigma * sqrt(dt) * eps
    r <- r + dr
    C <- C + r * dt

Because ``k0 - k2 * C = k2 * (log(S_hat) - log(S)) - sigma_r**2 / 2`` under the
closed-form calibration, the drift depends only on the current level. A regime
switch that re-anchors ``S0`` at the current level and resets ``C`` is therefore
the same as swapping parameters in the log-level form used by ``simulate``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "AnchoredParams",
    "CalibrationError",
    "CorrelationSpec",
    "MomentTargets",
    "SRMRParams",
    "SRMRState",
    "analytic_moments",
    "calibrate",
    "correlated_noise",
    "estimate_moments",
    "moment_residuals",
    "reanchor",
    "simulate",
    "step",
]


class CalibrationError(ValueError):
    """Moment targets admit no valid parameter set."""


@dataclass(frozen=True)
class MomentTargets:
    """Long-run targets for one regime.

    ``smoothness`` is the mean squared one-step change of the return,
    ``E[(r_t - r_{t-1})^2]``, a variance-like quantity (not a stdev).
    """

    level_mean: float
    level_stdev: float
    return_stdev: float
    smoothness: float
    start_level: float

    def __post_init__(self):
        for name in ("level_mean", "level_stdev", "return_stdev", "smoothness", "start_level"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        if self.level_mean <= 0 or self.start_level <= 0:
            raise ValueError("level_mean and start_level must be positive")

    @property
    def degenerate(self) -> bool:
        return self.level_stdev == 0 or self.return_stdev == 0 or self.smoothness == 0

    def with_start(self, start_level: float) -> "MomentTargets":
        return MomentTargets(self.level_mean, self.level_stdev, self.return_stdev, self.smoothness, start_level)


@dataclass(frozen=True)
class SRMRParams:
    k0: float
    k1: float
    k2: float
    sigma: float

    def __post_init__(self):
        if not (self.k1 > 0 and self.k2 > 0 and self.sigma >= 0):
            raise ValueError(f"need k1 > 0, k2 > 0, sigma >= 0; got {self}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SRMRState:
    ret: float
    cum: float
    start_level: float

    @property
    def level(self) -> float:
        return self.start_level * math.exp(self.cum)


@dataclass(frozen=True)
class CorrelationSpec:
    rho: float = 0.0

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"correlation must lie in [-1, 1], got {self.rho}")


def estimate_moments(series, start_level: float | None = None) -> MomentTargets:
    """Per-regime sample moments of daily levels and their log-returns.

    Variances use the ``1/n`` normalisation. ``start_level`` defaults to the
    first observation.
    """
    s = np.asarray(series, dtype=float)
    if s.size < 3:
        raise ValueError("need at least 3 observations")
    if np.any(~np.isfinite(s)) or np.any(s <= 0):
        raise ValueError("levels must be finite and positive")
    r = np.diff(np.log(s))
    dr = np.diff(r)
    return MomentTargets(
        level_mean=float(np.mean(s)),
        level_stdev=float(np.std(s)),
        return_stdev=float(np.std(r)),
        smoothness=float(np.mean(dr * dr)),
        start_level=float(s[0] if start_level is None else start_level),
    )


def calibrate(targets: MomentTargets) -> SRMRParams:
    """Closed-form parameters matching the four long-run moments."""
    t = targets
    if t.degenerate:
        raise CalibrationError("degenerate targets: zero level stdev, return stdev or smoothness")
    vr = t.return_stdev**2
    log_ratio = math.log1p((t.level_stdev / t.level_mean) ** 2)
    k2 = vr / log_ratio if log_ratio > 0 else math.inf
    if not math.isfinite(k2):
        raise CalibrationError("degenerate targets: level variance too small relative to return variance")
    slack = t.smoothness - k2 * vr
    if not slack > 0:
        raise CalibrationError(
            f"smoothness incompatible with return variance: need smoothness > {k2 * vr:.6g}, got {t.smoothness:.6g}"
        )
    k1 = math.sqrt(1.0 + slack / vr) - 1.0
    k0 = k2 * math.log(t.level_mean / t.start_level) - 0.5 * vr
    return SRMRParams(k0=k0, k1=k1, k2=k2, sigma=math.sqrt(2.0 * k1 * vr))


def analytic_moments(params: SRMRParams, start_level: float) -> MomentTargets:
    """Long-run moments implied by ``params`` (inverse of ``calibrate``)."""
    k0, k1, k2, s2 = params.k0, params.k1, params.k2, params.sigma**2
    var_c = s2 / (2 * k1 * k2)
    mean = start_level * math.exp(k0 / k2 + var_c / 2)
    return MomentTargets(
        level_mean=mean,
        level_stdev=mean * math.sqrt(math.expm1(var_c)),
        return_stdev=math.sqrt(s2 / (2 * k1)),
        smoothness=0.5 * s2 * (k1 + k2 / k1 + 2),
        start_level=start_level,
    )


def moment_residuals(params: SRMRParams, targets: MomentTargets) -> np.ndarray:
    """Relative residuals of the four matching equations, evaluated term by term."""
    k0, k1, k2, s2 = params.k0, params.k1, params.k2, params.sigma**2
    s0 = targets.start_level
    lhs = np.array(
        [
            math.exp(k0 / k2 + s2 / (4 * k1 * k2)),
            math.exp(2 * k0 / k2 + s2 / (2 * k1 * k2)) * math.expm1(s2 / (2 * k1 * k2)),
            s2 / (2 * k1),
            0.5 * s2 * (k1 + k2 / k1 + 2),
        ]
    )
    rhs = np.array(
        [
            targets.level_mean / s0,
            targets.level_stdev**2 / s0**2,
            targets.return_stdev**2,
            targets.smoothness,
        ]
    )
    return (lhs - rhs) / rhs


@dataclass(frozen=True)
class AnchoredParams:
    """Parameters together with the start level they were calibrated against."""

    params: SRMRParams
    start_level: float

    @classmethod
    def from_targets(cls, targets: MomentTargets) -> "AnchoredParams":
        return cls(calibrate(targets), targets.start_level)

    @property
    def log_anchor(self) -> float:
        """Log level the drift pulls toward: ``k0 - k2 * C == k2 * (log_anchor - log S)``."""
        return math.log(self.start_level) + self.params.k0 / self.params.k2

    @property
    def level_mean(self) -> float:
        return analytic_moments(self.params, self.start_level).level_mean


def reanchor(params: SRMRParams, old_start: float, new_start: float) -> SRMRParams:
    """Same long-run targets, measured from a different starting level."""
    return SRMRParams(params.k0 + params.k2 * math.log(old_start / new_start), params.k1, params.k2, params.sigma)


def _increment(ret, cum, params: SRMRParams, noise, dt: float):
    return (params.k0 - params.k1 * ret - params.k2 * cum) * dt + params.sigma * noise


def step(state: SRMRState, params: SRMRParams, noise: float, dt: float = 1.0) -> SRMRState:
    """One recursion step; ``noise`` is already scaled by ``sqrt(dt)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    ret = state.ret + _increment(state.ret, state.cum, params, noise, dt)
    return SRMRState(ret, state.cum + ret * dt, state.start_level)


def correlated_noise(rho: CorrelationSpec | float, eps1, eps2):
    r = rho.rho if isinstance(rho, CorrelationSpec) else float(rho)
    if not -1.0 <= r <= 1.0:
        raise ValueError(f"correlation must lie in [-1, 1], got {r}")
    eps1 = np.asarray(eps1, dtype=float)
    return eps1, r * eps1 + np.asarray(eps2, dtype=float) * math.sqrt(1.0 - r * r)


def simulate(
    params: SRMRParams,
    start_level: float,
    steps: int,
    rng: np.random.Generator,
    n_paths: int = 1,
    ret0: float = 0.0,
    cum0: float = 0.0,
    dt: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Single-regime paths; returns (returns, levels), each of shape (n_paths, steps + 1)."""
    rets = np.empty((n_paths, steps + 1))
    cums = np.empty((n_paths, steps + 1))
    rets[:, 0] = ret0
    cums[:, 0] = cum0
    scale = math.sqrt(dt)
    for t in range(steps):
        eps = rng.standard_normal(n_paths) * scale
        r = rets[:, t] + _increment(rets[:, t], cums[:, t], params, eps, dt)
        rets[:, t + 1] = r
        cums[:, t + 1] = cums[:, t] + r * dt
    return rets, start_level * np.exp(cums)


def save_calibration(params: SRMRParams, targets: MomentTargets, path: str | Path) -> None:
    Path(path).write_text(json.dumps({"params": params.to_dict(), "targets": asdict(targets)}, indent=2, sort_keys=True))
