"""Reverse-time sampling by uniformization, and its exact marginal oracle.

Reverse step ``k`` runs from forward time ``T - kh`` down to ``T - (k+1)h``
and therefore uses the network trained on forward interval ``K - 1 - k``.

Reverse jump rates are ``s_hat(x)_{i,a} / S``.  The Poisson clock runs at
``lambda_k / S`` where ``lambda_k`` is the largest aggregate clipped score,
so a jump to slot ``(i, a)`` is accepted with probability
``s_hat(x)_{i,a} / lambda_k``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np
from scipy import sparse, stats

from .exceptions import RateBoundError
from .score_net import ScoreNet, clip_score
from .score_oracle import ScoreTable, reverse_generator
from .state_process import DistTable, StateSpace, stationary

log = logging.getLogger(__name__)

ScoreSource = Union[ScoreNet, ScoreTable]


@dataclass(frozen=True)
class SamplerConfig:
    K: int
    h: float
    delta: float = 0.0
    seed: int = 0
    guard: float = 1e3

    @property
    def T(self) -> float:
        return self.K * self.h + self.delta


@dataclass
class JumpTrace:
    k: List[int] = field(default_factory=list)
    lam: List[float] = field(default_factory=list)
    n_jumps: List[int] = field(default_factory=list)
    flips: List[int] = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("k,lambda_k,N,flips\n")
            for row in zip(self.k, self.lam, self.n_jumps, self.flips):
                fh.write(f"{row[0]},{row[1]!r},{row[2]},{row[3]}\n")


def tabulate(source: ScoreSource, space: StateSpace, clipped: bool = True) -> ScoreTable:
    """Clipped (or raw) network outputs on every state; tables pass through."""
    if isinstance(source, ScoreTable):
        return source
    space.require_enumerable()
    vals = source.forward_clipped(space.states) if clipped else source.forward_raw(space.states)
    return ScoreTable(vals, space)


def lambda_k(source: ScoreSource, space: StateSpace) -> float:
    """Largest aggregate clipped score over all states.

    Falls back to the analytic ceiling ``C d (S-1)`` when the space is too
    large to enumerate.
    """
    if isinstance(source, ScoreTable):
        return float(source.aggregate().max())
    if not space.enumerable:
        log.warning("state space too large to enumerate; using lambda = C d (S-1)")
        return float(source.C * space.d * (space.S - 1))
    return float(tabulate(source, space).aggregate().max())


def _score_lookup(source: ScoreSource, space: StateSpace):
    if space.enumerable:
        table = tabulate(source, space).values
        return lambda y: table[space.index_of(y)]
    return source.forward_clipped


def _jump(y, scores, lam, S, rng):
    """One uniformization trial for each row of ``y``; returns (new y, flipped mask)."""
    m = len(y)
    probs = scores.reshape(m, -1) / lam
    total = probs.sum(axis=1)
    if np.any(total > 1.0 + 1e-12):
        raise RateBoundError(f"jump probabilities sum to {total.max():.6g} > 1; lambda too small")
    cum = np.cumsum(probs, axis=1)
    slot = (cum < rng.random(m)[:, None]).sum(axis=1)
    flip = slot < probs.shape[1]
    i = slot[flip] // (S - 1)
    a = slot[flip] % (S - 1)
    rows = np.nonzero(flip)[0]
    cur = y[rows, i]
    y = y.copy()
    y[rows, i] = a + (a >= cur)
    return y, flip


def uniformization_interval(source: ScoreSource, z, h: float, rng, space: StateSpace,
                            lam: float | None = None, guard: float = 1e3, trace: JumpTrace = None,
                            k: int = 0, lookup=None):
    """Advance states ``z`` (one state or an ``(n, d)`` stack) through one interval."""
    z = np.asarray(z, dtype=np.int64)
    single = z.ndim == 1
    y = np.atleast_2d(z).copy()
    lam = lambda_k(source, space) if lam is None else lam
    rate = lam / space.S
    if rate * h > guard:
        raise RateBoundError(f"lambda*h = {rate * h:.4g} exceeds the guard {guard}")
    lookup = _score_lookup(source, space) if lookup is None else lookup
    N = np.atleast_1d(rng.poisson(rate * h, size=len(y)))
    flips = np.zeros(len(y), dtype=np.int64)
    for j in range(int(N.max()) if len(N) else 0):
        active = np.nonzero(N > j)[0]
        ya = y[active]
        ynew, flipped = _jump(ya, lookup(ya), lam, space.S, rng)
        y[active] = ynew
        flips[active] += flipped
    if trace is not None:
        for n_j, f_j in zip(N.tolist(), flips.tolist()):
            trace.k.append(k)
            trace.lam.append(lam)
            trace.n_jumps.append(int(n_j))
            trace.flips.append(int(f_j))
    return (y[0] if single else y), N, flips


def sample_reverse(nets: Sequence[ScoreSource], config: SamplerConfig, n: int, space: StateSpace,
                   rng=None, trace: JumpTrace = None) -> np.ndarray:
    """Draw ``n`` samples of the learned reverse process; returns ``(n, d)``."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    if len(nets) != config.K:
        raise ValueError(f"expected {config.K} networks, got {len(nets)}")
    z = rng.integers(0, space.S, size=(n, space.d))
    for k in range(config.K):
        src = nets[config.K - 1 - k]
        lookup = _score_lookup(src, space)
        lam = lambda_k(src, space)
        z, _, _ = uniformization_interval(src, z, config.h, rng, space, lam=lam, guard=config.guard,
                                          trace=trace, k=k, lookup=lookup)
    return z


def uniformized_transition(p: np.ndarray, Q, rate: float, h: float, tail_tol: float = 1e-12):
    """``p exp(hQ)`` by the truncated series ``sum_m Pois(m; rate h) p P^m``."""
    N = len(p)
    P = sparse.identity(N, format="csr") + sparse.csr_matrix(Q) / rate
    mu = rate * h
    out = np.zeros(N)
    term = p.copy()
    m = 0
    while True:
        out += stats.poisson.pmf(m, mu) * term
        if stats.poisson.sf(m, mu) < tail_tol and m >= mu:
            break
        term = P.T @ term
        m += 1
    return out


def exact_reverse_marginal(nets: Sequence[ScoreSource], config: SamplerConfig, space: StateSpace,
                           tail_tol: float = 1e-12) -> DistTable:
    """Exact law of :func:`sample_reverse`'s output."""
    space.require_enumerable()
    p = stationary(space).probs.copy()
    for k in range(config.K):
        table = tabulate(nets[config.K - 1 - k], space)
        Q = reverse_generator(table, dense=False)
        rate = lambda_k(table, space) / space.S
        p = uniformized_transition(p, Q, rate, config.h, tail_tol)
    p = np.clip(p, 0.0, None)
    return DistTable(p / p.sum(), space)


def constant_table(value: float, space: StateSpace) -> ScoreTable:
    return ScoreTable(np.full((space.size, space.d, space.S - 1), float(value)), space)


def clip_table(raw: ScoreTable, C: float) -> ScoreTable:
    return ScoreTable(clip_score(raw.values, C), raw.space)
