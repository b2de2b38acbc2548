"""Negative entropy, the generalized I-divergence and score-entropy losses."""
from __future__ import annotations

from typing import Callable, Union

import numpy as np

from .score_oracle import ScoreTable, true_score
from .state_process import DistTable, forward_marginal

TINY = 1e-300


def _positive(x, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= TINY)):
        raise ValueError(f"{name} must be strictly positive (>= {TINY:g})")
    return x


def neg_entropy(x) -> float:
    x = _positive(x)
    return float(np.sum(x * np.log(x)))


def bregman_terms(x, y) -> np.ndarray:
    """Elementwise ``-x + y + x log(x/y)``; sum along any axis to get ``D_I``."""
    x = _positive(x, "x")
    y = _positive(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    return y - x + x * np.log(x / y)


def bregman_I(x, y) -> float:
    """Generalized I-divergence ``D_I(x || y)``."""
    return float(np.sum(bregman_terms(x, y)))


def se_minibatch_loss(raw_scores, targets, S: int) -> float:
    """Score-entropy minibatch loss ``mean_b (1/S) sum (-r log s + s)``.

    The first axis of both arrays is the batch axis; the rest are summed.
    """
    s = _positive(raw_scores, "raw_scores")
    r = _positive(targets, "targets")
    if s.shape != r.shape:
        raise ValueError(f"shape mismatch {s.shape} vs {r.shape}")
    per_sample = (s - r * np.log(s)).reshape(len(s), -1).sum(axis=1) / S
    return float(per_sample.mean())


def se_constant(targets, S: int) -> float:
    """The dropped term ``mean_b (1/S) sum (r - r log r)``; loss minus this is ``D_I``."""
    r = _positive(targets, "targets")
    return float(((r - r * np.log(r)).reshape(len(r), -1).sum(axis=1) / S).mean())


# -- population oracle --------------------------------------------------------

Estimate = Union[ScoreTable, Callable[[float], ScoreTable]]


def _at(estimate: Estimate, t: float) -> ScoreTable:
    return estimate(t) if callable(estimate) else estimate


def simpson(f: Callable[[float], float], a: float, b: float, n_nodes: int = 17) -> float:
    """Composite Simpson rule with ``n_nodes`` (odd) equally spaced nodes."""
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError("Simpson needs an odd number of nodes >= 3")
    ts = np.linspace(a, b, n_nodes)
    vals = np.array([f(t) for t in ts])
    w = np.ones(n_nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float((b - a) / (3 * (n_nodes - 1)) * np.dot(w, vals))


def adaptive_simpson(f, a, b, tol=1e-8, n_nodes=17, max_nodes=4097):
    """Double the Simpson node count until two successive values agree within ``tol``.

    Returns ``(value, n_nodes_used)``; stops at ``max_nodes`` regardless.
    """
    cache = {}

    def g(t):
        if t not in cache:
            cache[t] = f(t)
        return cache[t]

    prev = simpson(g, a, b, n_nodes)
    while n_nodes < max_nodes:
        n_nodes = 2 * n_nodes - 1
        cur = simpson(g, a, b, n_nodes)
        if abs(cur - prev) < tol:
            return cur, n_nodes
        prev = cur
    return prev, n_nodes


def expected_bregman(p0: DistTable, estimate: Estimate, t: float, target_time=None) -> float:
    """``E_{x ~ q_t} D_I(s(x) || estimate(x))`` by enumeration.

    The true score is taken at ``target_time`` (defaults to ``t``).
    """
    q = forward_marginal(p0, t).probs
    s = true_score(p0, t if target_time is None else target_time)
    est = _at(estimate, t)
    per_state = bregman_terms(s.values, est.values).reshape(len(q), -1).sum(axis=1)
    return float(q @ per_state)


def population_se(p0: DistTable, estimate: Estimate, k: int, h: float, delta: float = 0.0,
                  *, frozen_target: bool = True, tol: float = 1e-8, n_nodes: int = 17) -> float:
    """Population score-entropy loss on ``[kh + delta, (k+1)h + delta]``.

    With ``frozen_target`` the true score is frozen at the interval's upper
    end; otherwise it moves with ``t``.  ``estimate`` is a fixed table or a
    callable ``t -> ScoreTable``.
    """
    a, b = k * h + delta, (k + 1) * h + delta
    tgt = b if frozen_target else None
    val, _ = adaptive_simpson(lambda t: expected_bregman(p0, estimate, t, tgt), a, b, tol, n_nodes)
    return val


def expected_minibatch_loss(p0: DistTable, estimate: Estimate, k: int, h: float,
                            delta: float = 0.0, *, tol: float = 1e-8) -> float:
    """Expectation of the minibatch loss over ``t``, ``x0`` and corruption.

    Conditioning on ``x_t`` turns the target into the true score ``s_t``, so
    the expectation is ``(1/(S h)) int E_{q_t} sum(-s_t log s_hat + s_hat) dt``.
    """
    S = p0.space.S

    def integrand(t):
        q = forward_marginal(p0, t).probs
        s = true_score(p0, t).values
        est = _positive(_at(estimate, t).values)
        return float(q @ (est - s * np.log(est)).reshape(len(q), -1).sum(axis=1))

    val, _ = adaptive_simpson(integrand, k * h + delta, (k + 1) * h + delta, tol)
    return val / (S * h)


def expected_min_loss(p0: DistTable, k: int, h: float, delta: float = 0.0, *, tol=1e-8) -> float:
    """Expected minibatch loss when the estimate equals the moving true score."""
    return expected_minibatch_loss(p0, lambda t: true_score(p0, t), k, h, delta, tol=tol)
