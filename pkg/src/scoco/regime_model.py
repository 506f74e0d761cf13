"""Regime-switching Markov chain: stationary laws, max-entropy estimation, simulation.

The transition matrix is inferred from a target stationary distribution and a
prescribed spectrum. Among all stochastic matrices with stationary law ``pi``
and eigenvalues ``(1, lam_2, ..., lam_S)`` we pick the one with the largest
conditional entropy ``-sum p_ij log p_ij``.

The search runs over eigenvector coordinates. Writing ``P = V^-1 D V`` with
``D = diag(1, lam_2, ..., lam_S)``, first row of ``V`` equal to ``pi`` and the
remaining rows summing to zero makes unit row sums, stationarity and the
spectrum hold identically, leaving only ``P > 0`` to enforce.

An independent check (``is_entropy_local_max``) works instead in the affine
space of stochastic matrices with stationary law ``pi`` and fixes the
spectrum through power sums ``tr(P^k) = 1 + sum_i lam_i^k``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import null_space

__all__ = [
    "EstimationError",
    "RegimePath",
    "RegimeSpec",
    "StationaryDistribution",
    "TransitionMatrix",
    "default_eigenvalues",
    "empirical_stationary",
    "entropy",
    "estimate_max_entropy",
    "expected_duration",
    "is_entropy_local_max",
    "simulate_regimes",
    "simulate_regime_paths",
    "stationary_of",
]

ROW_SUM_TOL = 1e-12
UNIT_EIG_TOL = 1e-10
FEASIBILITY_TOL = 1e-11


class EstimationError(RuntimeError):
    """Raised when the max-entropy program cannot reach feasibility.

    ``residuals`` holds the final constraint violations of the best start.
    """

    def __init__(self, message: str, residuals: np.ndarray | None = None):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class RegimeSpec:
    """Per-regime spread statistics.

    ``return_stdev`` is a decimal per-step (daily) figure, e.g. 0.052 for 5.2%.
    """

    regime_id: int
    spread_mean: float
    spread_stdev: float
    return_stdev: float
    label: str = ""

    def __post_init__(self):
        if self.regime_id < 0:
            raise ValueError("regime_id must be non-negative")
        if not self.spread_mean > 0:
            raise ValueError(f"spread_mean must be positive, got {self.spread_mean}")
        for name in ("spread_stdev", "return_stdev"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    @property
    def degenerate(self) -> bool:
        """A flat segment: no dispersion to calibrate against."""
        return self.spread_stdev == 0 or self.return_stdev == 0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StationaryDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("stationary distribution must be a non-empty vector")
        if np.any(p < 0):
            raise ValueError("stationary probabilities must be non-negative")
        if abs(math.fsum(p) - 1.0) > ROW_SUM_TOL:
            raise ValueError(f"stationary probabilities sum to {math.fsum(p)!r}, not 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def normalized(cls, weights: Sequence[float]) -> "StationaryDistribution":
        w = np.asarray(weights, dtype=float)
        return cls(w / math.fsum(w))

    def __len__(self) -> int:
        return self.probs.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic matrix with cached real spectrum (descending)."""

    matrix: np.ndarray
    eigenvalues: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        p = _frozen(self.matrix)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] == 0:
            raise ValueError("transition matrix must be square and non-empty")
        if not np.all(np.isfinite(p)):
            raise ValueError("transition matrix has non-finite entries")
        if np.any(p < 0):
            raise ValueError("transition probabilities must be non-negative")
        rows = np.array([math.fsum(r) for r in p])
        if np.max(np.abs(rows - 1.0)) > ROW_SUM_TOL:
            raise ValueError(
                f"rows must sum to 1 within {ROW_SUM_TOL}; worst is {rows[np.argmax(np.abs(rows - 1))]!r}"
            )
        object.__setattr__(self, "matrix", p)
        eig = np.linalg.eigvals(p)
        order = np.argsort(-eig.real, kind="stable")
        object.__setattr__(self, "eigenvalues", _frozen(eig.real[order]))

    @classmethod
    def from_rows(cls, rows, normalize: bool = False) -> "TransitionMatrix":
        """Build from nested rows; ``normalize`` rescales rows printed with rounding."""
        p = np.asarray(rows, dtype=float)
        if normalize:
            p = p / p.sum(axis=1, keepdims=True)
        return cls(p)

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["from", "to", "prob"])
            for i, row in enumerate(self.matrix):
                for j, v in enumerate(row):
                    w.writerow([i, j, repr(float(v))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "TransitionMatrix":
        entries = {}
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                entries[int(rec["from"]), int(rec["to"])] = float(rec["prob"])
        n = 1 + max(max(k) for k in entries)
        p = np.zeros((n, n))
        for (i, j), v in entries.items():
            p[i, j] = v
        return cls(p)

    def to_json(self) -> dict:
        return {
            "matrix": self.matrix.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "stationary": stationary_of(self).probs.tolist(),
            "entropy": entropy(self),
        }


@dataclass(frozen=True)
class RegimePath:
    """Regime labels on an integer grid; ``step_days`` is the grid spacing."""

    states: np.ndarray
    step_days: int = 1

    def __post_init__(self):
        object.__setattr__(self, "states", np.asarray(self.states, dtype=np.int64))

    def __len__(self) -> int:
        return self.states.size

    def sojourns(self) -> list[tuple[int, int]]:
        """(regime, run length) for each maximal constant run."""
        s = self.states
        cut = np.flatnonzero(np.diff(s)) + 1
        starts = np.r_[0, cut]
        ends = np.r_[cut, s.size]
        return [(int(s[a]), int(b - a)) for a, b in zip(starts, ends)]


def _as_matrix(P) -> np.ndarray:
    if isinstance(P, TransitionMatrix):
        return P.matrix
    return np.asarray(P, dtype=float)


def entropy(P) -> float:
    """Conditional entropy ``-sum p_ij log p_ij`` with ``0 log 0 = 0``."""
    p = _as_matrix(P).ravel()
    nz = p[p > 0]
    return float(-math.fsum(nz * np.log(nz)))


def empirical_stationary(assignments: Iterable[int], n_regimes: int | None = None) -> StationaryDistribution:
    """Fraction of observation days spent in each regime."""
    a = np.asarray(list(assignments), dtype=np.int64)
    if a.size == 0:
        raise ValueError("no observations")
    if np.any(a < 0):
        raise ValueError("regime ids must be non-negative")
    n = int(a.max()) + 1 if n_regimes is None else n_regimes
    if a.max() >= n:
        raise ValueError(f"regime id {int(a.max())} outside 0..{n - 1}")
    counts = np.bincount(a, minlength=n).astype(float)
    return StationaryDistribution(counts / a.size)


def stationary_of(P) -> StationaryDistribution:
    p = _as_matrix(P)
    n = p.shape[0]
    eig = np.linalg.eigvals(p)
    if np.count_nonzero(np.abs(eig - 1.0) < UNIT_EIG_TOL) > 1:
        raise ValueError("stationary distribution not unique")
    a = p.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(a, b)
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    if np.any(pi < 0):
        raise ValueError("stationary solution has negative mass; matrix is not a valid chain")
    return StationaryDistribution(pi / math.fsum(pi))


def expected_duration(P, i: int) -> float:
    pii = float(_as_matrix(P)[i, i])
    if pii >= 1.0:
        raise ValueError("infinite expected duration")
    return 1.0 / (1.0 - pii)


def default_eigenvalues(n_states: int) -> np.ndarray:
    """``1 - i * 1e-3`` for ``i = 2..S``: slow, ordered decay."""
    return np.array([1.0 - i * 1e-3 for i in range(2, n_states + 1)])


# --------------------------------------------------------------------------
# max-entropy program


class _ReducedProblem:
    """Entropy program on the affine space of matrices with fixed row sums and pi."""

    def __init__(self, target: np.ndarray, eigenvalues: np.ndarray):
        s = target.size
        self.s = s
        self.target = target
        rows = []
        for i in range(s):
            r = np.zeros((s, s))
            r[i, :] = 1.0
            rows.append(r.ravel())
        for j in range(s - 1):  # last stationarity equation is implied
            c = np.zeros((s, s))
            c[:, j] = target
            rows.append(c.ravel())
        a = np.array(rows)
        self.base = np.outer(np.ones(s), target)
        ns = null_space(a)
        self.basis = ns.T.reshape(-1, s, s)
        self.dim = self.basis.shape[0]
        lam = np.r_[1.0, eigenvalues]
        self.n_con = s - 1
        self.power_targets = np.array([np.sum(lam ** k) / k for k in range(1, s)])

    def matrix(self, z: np.ndarray) -> np.ndarray:
        return self.base + np.tensordot(z, self.basis, axes=1)

    def project(self, p: np.ndarray) -> np.ndarray:
        """Reduced coordinates of the orthogonal projection of ``p`` on the affine space."""
        return np.tensordot(self.basis, p - self.base, axes=([1, 2], [0, 1]))

    def powers(self, p: np.ndarray) -> list[np.ndarray]:
        out = [np.eye(self.s)]
        for _ in range(self.s - 1):
            out.append(out[-1] @ p)
        return out

    def constraints(self, p: np.ndarray, pw=None) -> np.ndarray:
        pw = self.powers(p) if pw is None else pw
        vals = np.array([np.trace(pw[k]) / k for k in range(1, self.s)])
        return vals - self.power_targets

    def jacobian(self, pw) -> np.ndarray:
        # d/dz_m tr(P^k)/k = tr(P^(k-1) N_m)
        return np.array(
            [np.einsum("ij,mji->m", pw[k - 1], self.basis) for k in range(1, self.s)]
        )

    def constraint_hessians(self, pw) -> list[np.ndarray]:
        hs = []
        left = [np.einsum("ab,mbc->mac", pw[a], self.basis) for a in range(self.s - 1)]
        for k in range(1, self.s):
            h = np.zeros((self.dim, self.dim))
            for a in range(k - 1):
                b = k - 2 - a
                h += np.einsum("mij,nji->mn", left[a], left[b])
            hs.append(h)
        return hs

    def neg_entropy(self, p: np.ndarray) -> float:
        x = p.ravel()
        return float(np.sum(x * np.log(x)))

    def neg_entropy_grad_hess(self, p: np.ndarray):
        x = p.ravel()
        flat = self.basis.reshape(self.dim, -1)
        g = flat @ (np.log(x) + 1.0)
        h = (flat / x) @ flat.T
        return g, h


class _EigenParam:
    """``P = V^-1 D V`` with first row of ``V`` pinned to ``pi`` and the rest zero-sum.

    Zero-sum rows force ``V 1 = e_1``, so ``U = V^-1`` has a unit first column
    and every row of ``P`` sums to one; ``pi P = pi`` and the spectrum hold by
    construction. Only positivity of ``P`` is left as a constraint.
    """

    def __init__(self, target: np.ndarray, eigenvalues: np.ndarray):
        s = target.size
        self.s = s
        self.target = target
        self.diag = np.r_[1.0, eigenvalues]
        # orthonormal basis of the zero-sum hyperplane, shape (s-1, s)
        self.zero_sum = null_space(np.ones((1, s))).T
        self.n_free = (s - 1) ** 2

    def vmatrix(self, w: np.ndarray) -> np.ndarray:
        rows = w.reshape(self.s - 1, self.s - 1) @ self.zero_sum
        return np.vstack([self.target, rows])

    def normalize(self, w: np.ndarray) -> np.ndarray:
        # row rescaling is a gauge symmetry of P; keeps V well scaled
        m = w.reshape(self.s - 1, self.s - 1)
        return (m / np.linalg.norm(m, axis=1, keepdims=True)).ravel()

    def matrix(self, w: np.ndarray):
        v = self.vmatrix(w)
        if np.linalg.cond(v) > 1e10:
            return None, None
        vinv = np.linalg.inv(v)
        return vinv @ (self.diag[:, None] * v), vinv

    def pullback(self, grad_p: np.ndarray, p: np.ndarray, vinv: np.ndarray) -> np.ndarray:
        """Chain rule from dF/dP to the free coordinates."""
        gv = self.diag[:, None] * (vinv.T @ grad_p) - vinv.T @ grad_p @ p.T
        return (gv[1:] @ self.zero_sum.T).ravel()


def _neg_entropy_and_grad(par: _EigenParam, w: np.ndarray):
    p, vinv = par.matrix(w)
    if p is None or np.any(p <= 0):
        return np.inf, None
    f = float(np.sum(p * np.log(p)))
    return f, par.pullback(np.log(p) + 1.0, p, vinv)


def _soft_min_objective(par: _EigenParam, w: np.ndarray, tau: float):
    """Negative soft minimum of the entries of ``P``; minimised to reach ``P > 0``."""
    p, vinv = par.matrix(w)
    if p is None:
        return np.inf, None
    x = -p / tau
    top = x.max()
    e = np.exp(x - top)
    f = tau * (top + np.log(e.sum()))
    return float(f), par.pullback(-e / e.sum(), p, vinv)


def _bfgs(fun, w0: np.ndarray, par: _EigenParam, max_iter: int = 400, gtol: float = 1e-12, stop=None):
    """Plain BFGS with Armijo backtracking; ``fun`` returns ``inf`` outside the domain."""
    w = w0.copy()
    f, g = fun(w)
    if not np.isfinite(f):
        return w, f
    h = np.eye(w.size)
    for it in range(max_iter):
        if stop is not None and stop(w):
            break
        if np.max(np.abs(g)) < gtol:
            break
        d = -h @ g
        slope = g @ d
        if slope >= 0:
            h = np.eye(w.size)
            d, slope = -g, -(g @ g)
        t = 1.0
        while t > 1e-14:
            cand = w + t * d
            fc, gc = fun(cand)
            if fc <= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break
        scaled = par.normalize(cand)
        fs, gs = fun(scaled)
        if np.isfinite(fs):  # rounding can push a marginal entry out of the domain
            cand, fc, gc = scaled, fs, gs
        s, y = cand - w, gc - g
        sy = s @ y
        if sy > 1e-300:
            if it == 0:
                h = np.eye(w.size) * (sy / (y @ y))
            rho = 1.0 / sy
            hy = h @ y
            h = h - rho * (np.outer(s, hy) + np.outer(hy, s)) + (rho * rho * (y @ hy) + rho) * np.outer(s, s)
        if abs(f - fc) <= 1e-16 * max(1.0, abs(f)) and np.max(np.abs(s)) < 1e-14:
            w, f, g = cand, fc, gc
            break
        w, f, g = cand, fc, gc
    return w, f


def _check_target(target, eigenvalues, n):
    if np.any(target <= 0):
        raise ValueError("target distribution must be strictly positive; zero-probability regimes are unreachable")
    if eigenvalues.size != n - 1:
        raise ValueError(f"need {n - 1} eigenvalues besides the unit root, got {eigenvalues.size}")
    mags = np.abs(eigenvalues)
    if np.any(mags >= 1):
        raise ValueError("eigenvalues other than the unit root must satisfy |lambda| < 1")
    if np.any(np.diff(mags) >= 0):
        raise ValueError("eigenvalues must be distinct and strictly decreasing in magnitude")


def estimate_max_entropy(
    target,
    eigenvalues: Sequence[float] | None = None,
    n_starts: int = 8,
    seed: int = 0,
) -> TransitionMatrix:
    """Max-entropy transition matrix with stationary law ``target`` and spectrum ``(1, *eigenvalues)``.

    Each start draws random zero-sum eigenvector rows, first pushes the matrix
    into the positive orthant (soft-min ascent), then maximises entropy with
    BFGS. The best of ``n_starts`` local maxima is returned.

    Raises:
        ValueError: invalid target or spectrum.
        EstimationError: no start produced a strictly positive matrix; the
            residuals carry the most negative entry reached.
    """
    pi = np.asarray(target, dtype=float)
    s = pi.size
    if abs(math.fsum(pi) - 1.0) > 1e-12:
        raise ValueError("target must sum to 1")
    lam = default_eigenvalues(s) if eigenvalues is None else np.asarray(eigenvalues, dtype=float)
    _check_target(pi, lam, s)
    if s == 1:
        return TransitionMatrix(np.ones((1, 1)))

    par = _EigenParam(pi, lam)
    tau = 0.05 * max(float(np.mean(1.0 - lam)), 1e-6)
    rng = np.random.default_rng(seed)
    found = []  # (neg entropy, start index, P)
    worst_entry = -np.inf
    for start in range(n_starts):
        w = par.normalize(rng.standard_normal(par.n_free))
        p, _ = par.matrix(w)
        if p is None:
            continue
        # the soft-min bias is about tau * log(s^2); shrink tau for thin feasible sets
        t = tau
        while p is not None and p.min() <= 0 and t > 1e-10:
            w, _ = _bfgs(
                lambda x: _soft_min_objective(par, x, t), w, par, max_iter=2000,
                stop=lambda x: (par.matrix(x)[0] is not None) and par.matrix(x)[0].min() > 0.05 * t,
            )
            p, _ = par.matrix(w)
            t *= 0.1
        if p is None or p.min() <= 0:
            if p is not None:
                worst_entry = max(worst_entry, float(p.min()))
            continue
        w, f = _bfgs(lambda x: _neg_entropy_and_grad(par, x), w, par)
        p, _ = par.matrix(w)
        found.append((f, start, p))

    if not found:
        res = np.array([worst_entry]) if np.isfinite(worst_entry) else None
        raise EstimationError(
            f"max-entropy program infeasible for target {pi.tolist()} and eigenvalues {lam.tolist()}: "
            f"no strictly positive matrix found; most negative entry reached {worst_entry:.3e}",
            residuals=res,
        )
    p = min(found, key=lambda t: (t[0], t[1]))[2]
    p = np.clip(p, 0.0, None)
    p /= p.sum(axis=1, keepdims=True)
    return TransitionMatrix(p)


def is_entropy_local_max(
    P,
    target,
    eigenvalues: Sequence[float],
    n_directions: int = 200,
    radius: float = 1e-4,
    feas_tol: float = 1e-6,
    seed: int = 0,
) -> bool:
    """Probe random feasible perturbations of norm ``radius``; True if none gains entropy."""
    pi = np.asarray(target, dtype=float)
    lam = np.asarray(eigenvalues, dtype=float)
    prob = _ReducedProblem(pi, lam)
    if prob.dim == 0:
        return True
    p0 = _as_matrix(P)
    z0 = prob.project(p0)
    h0 = -prob.neg_entropy(prob.matrix(z0))
    jac = prob.jacobian(prob.powers(prob.matrix(z0)))
    tangent = null_space(jac) if prob.n_con else np.eye(prob.dim)
    if tangent.shape[1] == 0:
        return True
    rng = np.random.default_rng(seed)
    for _ in range(n_directions):
        d = tangent @ rng.standard_normal(tangent.shape[1])
        z = z0 + radius * d / np.linalg.norm(d)
        for _ in range(20):  # Gauss-Newton return to the constraint manifold
            p = prob.matrix(z)
            pw = prob.powers(p)
            c = prob.constraints(p, pw)
            if np.max(np.abs(c)) < 1e-14:
                break
            jz = prob.jacobian(pw)
            z = z - np.linalg.lstsq(jz, c, rcond=None)[0]
        p = prob.matrix(z)
        if np.any(p <= 0) or np.max(np.abs(prob.constraints(p))) > feas_tol:
            continue
        if -prob.neg_entropy(p) > h0 + 1e-12:
            return False
    return True


# --------------------------------------------------------------------------
# simulation


def simulate_regime_paths(P, initial: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Chain driven by ``uniforms`` of shape (n_paths, steps); returns (n_paths, steps + 1).

    The next state is the first column whose cumulative row probability exceeds
    the uniform draw.
    """
    from ._kernels import markov_paths

    cum = np.cumsum(_as_matrix(P), axis=1)
    cum[:, -1] = 1.0
    init = np.broadcast_to(np.asarray(initial, dtype=np.int64), (uniforms.shape[0],)).copy()
    return markov_paths(cum, init, np.ascontiguousarray(uniforms, dtype=float))


def simulate_regimes(P, initial: int, steps: int, seed: int | np.random.Generator = 0) -> RegimePath:
    """Markov path of ``steps`` transitions (``steps + 1`` labels, first one ``initial``)."""
    p = _as_matrix(P)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0 <= initial < p.shape[0]:
        raise ValueError(f"initial regime {initial} outside 0..{p.shape[0] - 1}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = rng.random((1, steps))
    return RegimePath(simulate_regime_paths(p, np.array([initial]), u)[0])


def transition_counts(path: RegimePath | np.ndarray, n_states: int) -> np.ndarray:
    s = np.asarray(path.states if isinstance(path, RegimePath) else path)
    counts = np.zeros((n_states, n_states))
    np.add.at(counts, (s[:-1], s[1:]), 1.0)
    return counts


def save_matrix_json(P: TransitionMatrix, path: str | Path) -> None:
    Path(path).write_text(json.dumps(P.to_json(), indent=2, sort_keys=True))
