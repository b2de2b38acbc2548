"""Exact divergences, error-term audits, and sample-complexity sweeps."""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np
from scipy import stats

from .bregman import adaptive_simpson, bregman_terms
from .score_net import ScoreNet, clip_score
from .score_oracle import ScoreTable, true_score
from .state_process import DistTable, forward_marginal, stationary, uniform_rate_bound
from .trainer import RunConfig, draw_dataset, resolve_C, train
from .sampler import SamplerConfig, exact_reverse_marginal, tabulate

AUDIT_SLACK = 1e-9


def kl(p: DistTable, q: DistTable) -> float:
    """``sum p log(p/q)`` with ``0 log 0 = 0``; ``inf`` on a support violation."""
    pp, qq = np.asarray(p.probs), np.asarray(q.probs)
    if pp.shape != qq.shape:
        raise ValueError(f"shape mismatch {pp.shape} vs {qq.shape}")
    m = pp > 0
    if np.any(qq[m] <= 0):
        return float("inf")
    return max(0.0, float(np.sum(pp[m] * np.log(pp[m] / qq[m]))))


@dataclass(frozen=True)
class ErrorTerms:
    A: float  # true vs clipped
    B: float  # true vs raw
    C: float  # raw vs clipped

    def violations(self, slack: float = AUDIT_SLACK) -> List[str]:
        out = []
        if self.A > 2 * self.B + 2 * self.C + slack:
            out.append("A <= 2B + 2C")
        if self.C > self.B + slack:
            out.append("C <= B")
        if self.A > 4 * self.B + slack:
            out.append("A <= 4B")
        return out


def error_terms(p0: DistTable, raw: ScoreTable, C: float, t: float) -> ErrorTerms:
    """Expected squared score distances under ``q_t`` for one interval."""
    q = forward_marginal(p0, t).probs
    s = true_score(p0, t).values
    r = raw.values
    c = clip_score(r, C)

    def expect(diff):
        return float(q @ (diff ** 2).reshape(len(q), -1).sum(axis=1))

    return ErrorTerms(A=expect(s - c), B=expect(s - r), C=expect(r - c))


def error_terms_for_nets(p0: DistTable, nets: Sequence[ScoreNet], h: float, delta: float = 0.0):
    """Error terms at each interval's query time ``(k+1)h + delta``."""
    out = []
    for k, net in enumerate(nets):
        raw = tabulate(net, p0.space, clipped=False)
        out.append(error_terms(p0, raw, net.C, (k + 1) * h + delta))
    return out


def truncation_error(p0: DistTable, T: float):
    """``(KL(q_T || uniform), d e^-T log S)``."""
    sp = p0.space
    return kl(forward_marginal(p0, T), stationary(sp)), sp.d * np.exp(-T) * np.log(sp.S)


def discretization_gap(p0: DistTable, tables: Sequence[ScoreTable], K: int, h: float,
                       delta: float = 0.0, C: float | None = None, tol: float = 1e-10):
    """Continuous vs left-rectangle score-error sums and the ``O(h)`` bound.

    ``tables[k]`` is the clipped estimate frozen on interval ``k``.  With
    ``t_k = delta + kh`` and ``f_k = D_I(s_{t_k} || tables[k])``,
    ``CT = (1/S) sum_k int_{I_k} E_{q_t} f_k`` and
    ``DT = (1/S) sum_k h E_{q_{t_k}} f_k``.  Returns ``(|CT-DT|, bound, CT, DT)``
    with ``bound = (S-1) d C lam T h / S`` and ``lam = d(S-1)/S``.
    """
    sp = p0.space
    S, d = sp.S, sp.d
    T = K * h + delta
    if C is None:
        C = max(float(np.max(np.maximum(tb.values, 1.0 / tb.values))) for tb in tables)
    CT = DT = 0.0
    for k in range(K):
        tk = delta + k * h
        f = bregman_terms(true_score(p0, tk).values, tables[k].values).reshape(sp.size, -1).sum(axis=1)

        def g(t, f=f):
            return float(forward_marginal(p0, t).probs @ f)

        integral, _ = adaptive_simpson(g, tk, tk + h, tol)
        CT += integral
        DT += h * g(tk)
    CT /= S
    DT /= S
    lam = uniform_rate_bound(sp)
    bound = (S - 1) * d * C * lam * T * h / S
    return abs(CT - DT), bound, CT, DT


def hardness_pair(eps: float):
    """KL and squared Hellinger distance of the two-point laws ``(1-e, e)``, ``(1-25e, 25e)``.

    Returns ``(kl, hellinger2, 7.5 * eps)``.
    """
    if not 0 < eps < 1 / 25:
        raise ValueError(f"eps must lie in (0, 1/25), got {eps}")
    kl_pq = (1 - eps) * np.log((1 - eps) / (1 - 25 * eps)) + eps * np.log(1 / 25)
    h2 = 1 - np.sqrt((1 - eps) * (1 - 25 * eps)) - 5 * eps
    return float(kl_pq), float(h2), 7.5 * eps


# -- sweeps ----------------------------------------------------------------------

SWEEP_HEADER = ("n_k", "seed", "mean_score_err", "kl", "wall_ms")


@dataclass(frozen=True)
class SweepRow:
    n_k: int
    seed: int
    mean_score_err: float
    kl: float
    wall_ms: float
    per_k_err: tuple = ()


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float

    @property
    def ci95(self):
        return self.slope - 1.96 * self.stderr, self.slope + 1.96 * self.stderr


def run_cell(config: RunConfig, p_data: DistTable, n_k: int, seed: int) -> SweepRow:
    """Train on ``n_k`` fresh samples and measure score error and KL exactly."""
    t0 = time.perf_counter()
    cfg = config.replace(n_k=int(n_k), seed_dataset=int(seed), seed_train=int(seed),
                         batch_size=min(config.batch_size, int(n_k)))
    data = draw_dataset(p_data, cfg.n_k, np.random.default_rng(cfg.seed_dataset))
    if cfg.C == "auto":
        _, C = resolve_C(p_data)
    else:
        C = float(cfg.C)
    nets, _ = train(data, cfg, C)
    terms = error_terms_for_nets(p_data, nets, cfg.h, cfg.delta)
    per_k = tuple(et.A for et in terms)
    out = exact_reverse_marginal(nets, SamplerConfig(cfg.K, cfg.h, cfg.delta), p_data.space)
    wall = 1e3 * (time.perf_counter() - t0)
    return SweepRow(int(n_k), int(seed), float(np.mean(per_k)), kl(p_data, out), wall, per_k)


def fit_slope(rows: Sequence[SweepRow]) -> SlopeFit:
    """Least-squares slope of ``log mean_score_err`` against ``log n_k``.

    A grid with a single ``n_k`` has no slope; every field is then NaN.
    """
    x = np.log([r.n_k for r in rows])
    if np.ptp(x) == 0:
        return SlopeFit(float("nan"), float("nan"), float("nan"))
    y = np.log([r.mean_score_err for r in rows])
    res = stats.linregress(x, y)
    return SlopeFit(float(res.slope), float(res.intercept), float(res.stderr))


def median_kl_by_n(rows: Sequence[SweepRow]):
    ns = sorted({r.n_k for r in rows})
    return ns, [float(np.median([r.kl for r in rows if r.n_k == n])) for n in ns]


def kl_monotonicity(rows: Sequence[SweepRow]) -> float:
    """Spearman correlation between ``n_k`` and the median KL at that ``n_k``."""
    ns, med = median_kl_by_n(rows)
    if len(ns) < 2:
        return float("nan")
    return float(stats.spearmanr(ns, med)[0])


def _cell(args):
    return run_cell(*args)


def sweep(config: RunConfig, p_data: DistTable, n_grid: Sequence[int], seeds: Sequence[int],
          jobs: int = 1, progress: Callable[[SweepRow], None] | None = None):
    """Run every ``(n_k, seed)`` cell; rows come back in grid order."""
    if not n_grid or not seeds:
        raise ValueError("sweep grid is empty")
    cells = [(config, p_data, int(n), int(s)) for n in n_grid for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_cell, cells))
    else:
        rows = []
        for c in cells:
            rows.append(run_cell(*c))
            if progress:
                progress(rows[-1])
    return rows, fit_slope(rows)


def write_sweep_csv(rows: Sequence[SweepRow], path):
    with open(path, "w") as fh:
        fh.write(",".join(SWEEP_HEADER) + "\n")
        for r in rows:
            fh.write(f"{r.n_k},{r.seed},{r.mean_score_err!r},{r.kl!r},{r.wall_ms:.3f}\n")


def read_sweep_csv(path) -> List[SweepRow]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != SWEEP_HEADER:
            raise ValueError(f"unexpected sweep header {header}")
        rows = []
        for line in fh:
            n, s, e, k, w = line.strip().split(",")
            rows.append(SweepRow(int(n), int(s), float(e), float(k), float(w)))
    return rows


def write_xy(path, x, y):
    """Plot-ready two-column file."""
    np.savetxt(path, np.column_stack([x, y]), fmt="%.17g", header="x y", comments="")


def write_error_terms_csv(terms: Sequence[ErrorTerms], path):
    with open(path, "w") as fh:
        fh.write("k,A_k,B_k,C_k\n")
        for k, et in enumerate(terms):
            fh.write(f"{k},{et.A!r},{et.B!r},{et.C!r}\n")
