"""Exact concrete scores, denoising ratio targets and score bounds."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .exceptions import FullSupportError
from .state_process import DistTable, StateSpace, forward_marginal

BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class ScoreTable:
    """Positive ratios for every (state, coordinate, alternative symbol).

    ``values`` has shape ``(S**d, d, S-1)``; slot ``m`` of coordinate ``i``
    refers to the ``m``-th symbol skipping the state's own symbol.
    """

    values: np.ndarray
    space: StateSpace

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = (self.space.size, self.space.d, self.space.S - 1)
        if v.shape != expected:
            raise ValueError(f"score table shape {v.shape} != {expected}")
        object.__setattr__(self, "values", v)

    def aggregate(self) -> np.ndarray:
        """Total outgoing score ``sum_i sum_a s(x)_{i,a}`` per state."""
        return self.values.reshape(self.space.size, -1).sum(axis=1)

    def flat(self) -> np.ndarray:
        return self.values.reshape(self.space.size, -1)

    def to_csv(self, path):
        """Write ``state,coord,symbol,value`` rows, state-index major."""
        sp = self.space
        idx = np.broadcast_to(np.arange(sp.size)[:, None, None], self.values.shape)
        coord = np.broadcast_to(np.arange(sp.d)[None, :, None], self.values.shape)
        with open(path, "w") as fh:
            fh.write("state,coord,symbol,value\n")
            for row in zip(idx.ravel(), coord.ravel(), sp.alt_symbols.ravel(), self.values.ravel()):
                fh.write(f"{row[0]},{row[1]},{row[2]},{float(row[3])!r}\n")

    @classmethod
    def from_csv(cls, path, space: StateSpace) -> "ScoreTable":
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 3].reshape(space.size, space.d, space.S - 1), space)


@dataclass(frozen=True)
class ScoreBoundReport:
    B: float
    kappa_i: np.ndarray
    kappa_sq: float
    C: float


@dataclass(frozen=True)
class BoundCheck:
    passed: bool
    n_violations: int
    worst: tuple | None  # (state index, coordinate, alternative symbol, value)


def true_score(p0: DistTable, t: float) -> ScoreTable:
    """Concrete score ``q_t(x with x_i -> a) / q_t(x)`` of the forward marginal."""
    q = forward_marginal(p0, t).probs
    if np.any(q <= 0):
        raise FullSupportError(f"forward marginal at t={t} has zero-probability states")
    sp = p0.space
    return ScoreTable(q[sp.neighbor_index] / q[:, None, None], sp)


def ratio_targets(x0, xt, t: float, S: int) -> np.ndarray:
    """Denoising targets ``P_t[x0_j, a] / P_t[x0_j, xt_j]`` for each slot.

    Works on single states or stacks; the result has shape ``(..., d, S-1)``.
    """
    if t <= 0:
        raise ValueError("ratio targets need t > 0")
    x0 = np.asarray(x0, dtype=np.int64)
    xt = np.asarray(xt, dtype=np.int64)
    e = np.exp(-t)
    off = (1.0 - e) / S
    alts = np.arange(S - 1) + (np.arange(S - 1) >= xt[..., None])
    num = off + e * (alts == x0[..., None])
    den = off + e * (xt == x0)
    return num / den[..., None]


def score_bound(p0: DistTable) -> ScoreBoundReport:
    """Exact ratio bound ``B``, marginal imbalances and the clip level ``1.5 B``."""
    p0.require_full_support()
    sp = p0.space
    p = p0.probs
    B = float(np.max(p[sp.neighbor_index] / p[:, None, None]))
    marg = p0.marginals()
    kappa = marg.max(axis=1) / marg.min(axis=1)
    return ScoreBoundReport(B=B, kappa_i=kappa, kappa_sq=float(np.sum(kappa ** 2)), C=1.5 * B)


def smoothed_empirical(samples, space: StateSpace, alpha: float = 1.0) -> DistTable:
    """Empirical law with a floor of ``alpha / S**d`` pseudo-counts per state."""
    idx = space.index_of(np.asarray(samples))
    counts = np.bincount(np.atleast_1d(idx), minlength=space.size).astype(float)
    return DistTable.from_unnormalized(counts + alpha / space.size, space)


def check_score_bound(score: ScoreTable, B: float) -> BoundCheck:
    """Check ``1/B <= s <= B`` entrywise with a small absolute slack."""
    v = score.values
    lo, hi = 1.0 / B - BOUND_SLACK, B + BOUND_SLACK
    bad = (v < lo) | (v > hi)
    n = int(bad.sum())
    if n == 0:
        return BoundCheck(True, 0, None)
    excess = np.where(bad, np.maximum(lo - v, v - hi), -np.inf)
    x, i, m = np.unravel_index(int(np.argmax(excess)), v.shape)
    a = int(score.space.alt_symbols[x, i, m])
    return BoundCheck(False, n, (int(x), int(i), a, float(v[x, i, m])))


def reverse_generator(score: ScoreTable, *, dense: bool = True):
    """Reverse-time generator with rate ``(1/S) s(x)_{i,a}`` for single flips."""
    sp = score.space
    N = sp.size
    rows = np.repeat(np.arange(N), sp.d * (sp.S - 1))
    rates = score.values.ravel() / sp.S
    Q = sparse.csr_matrix((rates, (rows, sp.neighbor_index.ravel())), shape=(N, N))
    Q = Q - sparse.diags(np.asarray(Q.sum(axis=1)).ravel())
    return Q.toarray() if dense else Q.tocsr()

