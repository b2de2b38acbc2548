"""State-space enumeration and the factorized uniform-flip forward CTMC.

Symbols are 0-indexed: symbol ``k`` here is symbol ``k + 1`` in the usual
``[S] = {1, ..., S}`` notation.  States are enumerated in mixed radix with
coordinate 0 most significant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import FullSupportError, InvalidStateError, OracleCapError

#: Largest state space the dense oracles will enumerate.
ORACLE_CAP = 2 ** 20

PROB_ATOL = 1e-12


@dataclass(frozen=True)
class StateSpace:
    """The product space ``{0..S-1}^d``."""

    S: int
    d: int
    cap: int = field(default=ORACLE_CAP, compare=False)

    def __post_init__(self):
        if int(self.S) < 2:
            raise ValueError(f"need at least 2 symbols, got S={self.S}")
        if int(self.d) < 1:
            raise ValueError(f"need at least 1 coordinate, got d={self.d}")

    @property
    def size(self) -> int:
        return int(self.S) ** int(self.d)

    @property
    def enumerable(self) -> bool:
        return self.size <= self.cap

    def require_enumerable(self):
        if not self.enumerable:
            raise OracleCapError(
                f"S^d = {self.S}^{self.d} = {self.size} exceeds the oracle cap {self.cap}"
            )

    @cached_property
    def radix(self) -> np.ndarray:
        return self.S ** np.arange(self.d - 1, -1, -1, dtype=np.int64)

    def check_states(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[-1:] != (self.d,):
            raise InvalidStateError(f"expected trailing dimension {self.d}, got shape {x.shape}")
        if not np.issubdtype(x.dtype, np.integer):
            if not np.all(np.mod(x, 1) == 0):
                raise InvalidStateError("state coordinates must be integers")
            x = x.astype(np.int64)
        if np.any(x < 0) or np.any(x >= self.S):
            raise InvalidStateError(f"state coordinates must lie in [0, {self.S - 1}]")
        return x.astype(np.int64, copy=False)

    def index_of(self, x):
        """Canonical mixed-radix index of one state or a stack of states."""
        x = self.check_states(x)
        idx = x @ self.radix
        return int(idx) if idx.ndim == 0 else idx

    def state_of(self, i) -> np.ndarray:
        """Inverse of :meth:`index_of`."""
        i = np.asarray(i, dtype=np.int64)
        if np.any(i < 0) or np.any(i >= self.size):
            raise InvalidStateError(f"state index out of range [0, {self.size})")
        return (i[..., None] // self.radix) % self.S

    @cached_property
    def states(self) -> np.ndarray:
        """All states, shape ``(S**d, d)``, in index order."""
        self.require_enumerable()
        return self.state_of(np.arange(self.size))

    @cached_property
    def alt_symbols(self) -> np.ndarray:
        """Alternative symbol for each score slot, shape ``(S**d, d, S-1)``.

        Slot ``m`` of coordinate ``i`` at state ``x`` holds the ``m``-th symbol
        in increasing order skipping ``x[i]``.
        """
        return alt_symbols_for(self.states, self.S)

    @cached_property
    def neighbor_index(self) -> np.ndarray:
        """Index of ``x`` with coordinate ``i`` replaced by the slot's symbol."""
        x = self.states
        shift = (self.alt_symbols - x[:, :, None]) * self.radix[None, :, None]
        return np.arange(self.size)[:, None, None] + shift


def alt_symbols_for(x: np.ndarray, S: int) -> np.ndarray:
    m = np.arange(S - 1)
    return m + (m >= x[..., None])


def hamming(x, y) -> int:
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise InvalidStateError(f"shape mismatch {x.shape} vs {y.shape}")
    return int(np.count_nonzero(x != y))


@dataclass(frozen=True)
class DistTable:
    """Dense probability vector over an enumerated state space."""

    probs: np.ndarray
    space: StateSpace

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (self.space.size,):
            raise ValueError(f"expected {self.space.size} probabilities, got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p = p / p.sum()
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_unnormalized(cls, weights, space: StateSpace) -> "DistTable":
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum(), space)

    @classmethod
    def product(cls, marginals) -> "DistTable":
        """Product law from a ``(d, S)`` array of per-coordinate marginals."""
        marginals = np.asarray(marginals, dtype=float)
        d, S = marginals.shape
        marginals = marginals / marginals.sum(axis=1, keepdims=True)
        p = marginals[0]
        for row in marginals[1:]:
            p = np.multiply.outer(p, row).ravel()
        return cls(p, StateSpace(S, d))

    @property
    def tensor(self) -> np.ndarray:
        return self.probs.reshape((self.space.S,) * self.space.d)

    def marginals(self) -> np.ndarray:
        """Per-coordinate marginals, shape ``(d, S)``."""
        t = self.tensor
        d = self.space.d
        return np.stack([t.sum(axis=tuple(j for j in range(d) if j != i)) for i in range(d)])

    def require_full_support(self):
        if np.any(self.probs <= 0):
            bad = int(np.argmin(self.probs))
            raise FullSupportError(f"state {self.space.state_of(bad).tolist()} has zero probability")

    def sample(self, n: int, rng) -> np.ndarray:
        """``n`` i.i.d. states by inverse CDF over the table."""
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        return self.space.state_of(np.minimum(idx, self.space.size - 1))


def token_kernel(t: float, S: int) -> np.ndarray:
    """Per-token transition matrix ``(1/S)(1 - e^-t) 11^T + e^-t I``."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    e = np.exp(-t)
    return np.full((S, S), (1.0 - e) / S) + e * np.eye(S)


def token_rate(S: int) -> np.ndarray:
    """Uniform flip rate ``(1/S) 11^T - I``."""
    if S < 2:
        raise ValueError(f"need S >= 2, got {S}")
    return np.full((S, S), 1.0 / S) - np.eye(S)


def global_rate(space: StateSpace) -> np.ndarray:
    """Dense ``S^d x S^d`` generator of the factorized chain."""
    space.require_enumerable()
    N = space.size
    Q = np.zeros((N, N))
    rows = np.repeat(np.arange(N), space.d * (space.S - 1))
    Q[rows, space.neighbor_index.ravel()] = 1.0 / space.S
    Q[np.arange(N), np.arange(N)] = (1.0 / space.S - 1.0) * space.d
    return Q


def uniform_rate_bound(space: StateSpace) -> float:
    """Largest total exit rate of the uniform-flip chain, ``d (S-1) / S``."""
    return space.d * (space.S - 1) / space.S


def stationary(space: StateSpace) -> DistTable:
    return DistTable(np.full(space.size, 1.0 / space.size), space)


def forward_marginal(p0: DistTable, t: float) -> DistTable:
    """Law of the forward chain at time ``t`` started from ``p0``."""
    space = p0.space
    space.require_enumerable()
    P = token_kernel(t, space.S)
    q = p0.tensor
    for axis in range(space.d):
        q = np.moveaxis(np.tensordot(q, P, axes=([axis], [0])), -1, axis)
    q = np.clip(q.ravel(), 0.0, None)
    return DistTable(q / q.sum(), space)


def sample_forward(x0, t: float, S: int, rng) -> np.ndarray:
    """Corrupt each coordinate independently with the token kernel at ``t``.

    ``x0`` may be one state or a stack of states.
    """
    x0 = np.asarray(x0, dtype=np.int64)
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    e = np.exp(-t)
    # keep w.p. e^-t, otherwise resample uniformly (which may also keep)
    resample = rng.random(x0.shape) >= e
    fresh = rng.integers(0, S, size=x0.shape)
    return np.where(resample, fresh, x0)
