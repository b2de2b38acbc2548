"""Property suites, one per module, run by ``dsdiff verify``.

Every check returns pass/fail plus a short detail string.  ``scale``
multiplies the number of random instances (and, for the training checks,
epochs and sample counts); 1.0 is the full documented size.
"""
from __future__ import annotations

import contextlib
import io as _io
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np
from scipy import stats

from . import bregman as br
from . import diagnostics as dg
from . import presets
from . import sampler as sm
from . import score_net as sn
from . import score_oracle as so
from . import state_process as sp
from . import trainer as tr


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str
    seconds: float


class Ctx:
    """Shared knobs for one verify run."""

    def __init__(self, scale: float = 1.0, clip_C=None, seed: int = 0):
        if scale <= 0:
            raise ValueError("verify scale must be positive")
        self.scale = float(scale)
        self.clip_C = clip_C
        self.seed = int(seed)

    def n(self, full: int, minimum: int = 1) -> int:
        return max(minimum, int(round(full * self.scale)))

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])


def random_p0(rng, S: int, d: int, floor: float = 0.0) -> sp.DistTable:
    space = sp.StateSpace(S, d)
    w = rng.dirichlet(np.ones(space.size)) + floor
    return sp.DistTable.from_unnormalized(w, space)


def random_small_space(rng, S_max=4, d_max=3):
    return int(rng.integers(2, S_max + 1)), int(rng.integers(1, d_max + 1))


def tv(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def empirical(states: np.ndarray, space: sp.StateSpace) -> np.ndarray:
    return np.bincount(space.index_of(states), minlength=space.size) / len(states)


def loglog_slope(x, y) -> float:
    return float(stats.linregress(np.log(x), np.log(y)).slope)


# -- state_process ------------------------------------------------------------

def check_semigroup(ctx):
    rng = ctx.rng(1)
    worst = 0.0
    for _ in range(ctx.n(200, 5)):
        S = int(rng.integers(2, 7))
        s, t = rng.exponential(1.0, size=2)
        lhs = sp.token_kernel(s, S) @ sp.token_kernel(t, S)
        worst = max(worst, np.abs(lhs - sp.token_kernel(s + t, S)).max())
    return worst <= 1e-10, f"max |P_s P_t - P_(s+t)| = {worst:.2e}"


def check_forward_consistency(ctx):
    rng = ctx.rng(2)
    worst = 0.0
    for _ in range(ctx.n(50, 5)):
        p0 = random_p0(rng, *random_small_space(rng))
        s, t = rng.exponential(1.0, size=2)
        a = sp.forward_marginal(p0, s + t).probs
        b = sp.forward_marginal(sp.forward_marginal(p0, s), t).probs
        worst = max(worst, np.abs(a - b).max())
    return worst <= 1e-10, f"max deviation {worst:.2e}"


def check_forward_monte_carlo(ctx):
    rng = ctx.rng(3)
    worst = 0.0
    n_draws = 100_000
    for _ in range(ctx.n(10, 2)):
        S, d = random_small_space(rng)
        p0 = random_p0(rng, S, d)
        t = float(rng.uniform(0.05, 2.0))
        x0 = p0.sample(n_draws, rng)
        xt = sp.sample_forward(x0, t, S, rng)
        worst = max(worst, tv(empirical(xt, p0.space), sp.forward_marginal(p0, t).probs))
    return worst < 0.01, f"max TV over configs = {worst:.4f} ({n_draws} draws each)"


def check_rate_kernel_link(ctx):
    worst_ratio = 0.0
    for S in range(2, 7):
        Q = sp.token_rate(S)
        for eps in (1e-3, 1e-4, 1e-5):
            err = np.abs((sp.token_kernel(eps, S) - np.eye(S)) / eps - Q).max()
            worst_ratio = max(worst_ratio, err / (2 * eps))
    return worst_ratio <= 1.0, f"max error / (2 eps) = {worst_ratio:.3f}"


# -- score_oracle -------------------------------------------------------------

def _reciprocal_values(score: so.ScoreTable) -> np.ndarray:
    """For each slot, the neighbour's score for flipping back."""
    space = score.space
    x = space.states
    alt = space.alt_symbols
    own = np.broadcast_to(x[:, :, None], alt.shape)
    back_slot = own - (own > alt)
    nb = space.neighbor_index
    coord = np.broadcast_to(np.arange(space.d)[None, :, None], alt.shape)
    return score.values[nb, coord, back_slot]


def check_score_bound_suite(ctx):
    rng = ctx.rng(4)
    times = np.geomspace(1e-3, 50, 20)
    n_viol = 0
    n_p0 = ctx.n(100, 5)
    for _ in range(n_p0):
        p0 = random_p0(rng, *random_small_space(rng), floor=1e-3)
        B = so.score_bound(p0).B
        for t in times:
            n_viol += so.check_score_bound(so.true_score(p0, t), B).n_violations
    return n_viol == 0, f"{n_viol} violations over {n_p0} laws x {len(times)} times"


def check_reciprocity(ctx):
    rng = ctx.rng(5)
    worst = 0.0
    for _ in range(ctx.n(50, 5)):
        p0 = random_p0(rng, *random_small_space(rng), floor=1e-3)
        s = so.true_score(p0, float(rng.exponential(1.0)))
        worst = max(worst, np.abs(s.values * _reciprocal_values(s) - 1).max())
    return worst <= 1e-9, f"max |s(x) s(y) - 1| = {worst:.2e}"


def check_detailed_balance(ctx):
    rng = ctx.rng(6)
    worst = 0.0
    for _ in range(ctx.n(30, 3)):
        S, d = random_small_space(rng, 4, 2)
        p0 = random_p0(rng, S, d, floor=1e-3)
        t = float(rng.exponential(1.0))
        q = sp.forward_marginal(p0, t).probs
        Qr = so.reverse_generator(so.true_score(p0, t))
        Qf = sp.global_rate(p0.space)
        lhs = q[:, None] * Qr
        rhs = (q[:, None] * Qf).T
        off = ~np.eye(len(q), dtype=bool)
        worst = max(worst, np.abs(lhs - rhs)[off].max())
    return worst <= 1e-10, f"max flux mismatch {worst:.2e}"


def score_movement(p0: sp.DistTable, h: float, t_mid: float = 1.0, n_grid: int = 33) -> float:
    """``max_t max_x |s_t(x) - s_b(x)|`` over one interval ``[a, b]`` of length ``h``.

    The interval is centred on ``t_mid`` so that the curvature of ``t -> s_t``
    does not bias the fitted order in ``h``.
    """
    a, b = t_mid - h / 2, t_mid + h / 2
    ref = so.true_score(p0, b).values
    return max(np.abs(so.true_score(p0, t).values - ref).max() for t in np.linspace(a, b, n_grid))


def check_score_movement(ctx):
    p0 = random_p0(ctx.rng(7), 3, 2, floor=0.02)
    hs = np.array([0.4, 0.2, 0.1, 0.05])
    slope = loglog_slope(hs, [score_movement(p0, h) for h in hs])
    return 0.8 <= slope <= 1.2, f"log-log slope {slope:.3f} (band [0.8, 1.2])"


# -- bregman_loss -------------------------------------------------------------

def _triples(rng, n):
    C = rng.uniform(1.2, 10.0, size=n)
    m = rng.integers(1, 7, size=n)
    out = []
    for Ci, mi in zip(C, m):
        lo, hi = np.log(1 / Ci), np.log(Ci)
        x, y, z = np.exp(rng.uniform(lo, hi, size=(3, mi)))
        out.append((Ci, x, y, z))
    return out


def check_sandwich(ctx):
    bad = 0
    trip = _triples(ctx.rng(8), ctx.n(10_000, 100))
    for C, x, y, _ in trip:
        D = br.bregman_I(x, y)
        sq = float(np.sum((x - y) ** 2))
        bad += not (sq / (2 * C) - 1e-12 <= D <= C / 2 * sq + 1e-12)
    return bad == 0, f"{bad} violations over {len(trip)} pairs"


def check_three_point_divergence(ctx):
    bad = 0
    trip = _triples(ctx.rng(9), ctx.n(10_000, 100))
    for C, x, y, z in trip:
        bad += br.bregman_I(x, y) > C * np.sum((x - z) ** 2) + 2 * C ** 2 * br.bregman_I(z, y) + 1e-12
    return bad == 0, f"{bad} violations over {len(trip)} triples"


def check_three_point_squared(ctx):
    bad = 0
    trip = _triples(ctx.rng(10), ctx.n(10_000, 100))
    for C, x, y, z in trip:
        bad += br.bregman_I(x, y) > C * np.sum((x - z) ** 2) + C ** 3 * np.sum((z - y) ** 2) + 1e-12
    return bad == 0, f"{bad} violations over {len(trip)} triples"


def check_loss_identity(ctx):
    rng = ctx.rng(11)
    worst = 0.0
    for _ in range(ctx.n(200, 10)):
        S = int(rng.integers(2, 6))
        shape = (int(rng.integers(1, 20)), int(rng.integers(1, 4)), S - 1)
        s_hat = np.exp(rng.normal(size=shape))
        r = np.exp(rng.normal(size=shape))
        lhs = br.se_minibatch_loss(s_hat, r, S) - br.se_minibatch_loss(r, r, S)
        rhs = np.mean([br.bregman_I(ri, si) for ri, si in zip(r, s_hat)]) / S
        worst = max(worst, abs(lhs - rhs))
    return worst <= 1e-10, f"max identity error {worst:.2e}"


# -- score_net ----------------------------------------------------------------

def fd_relative_error(net: sn.ScoreNet, xt, r, n_params: int, rng, step: float = 1e-5) -> float:
    """Relative error of the analytic gradient on ``n_params`` random coordinates."""
    _, grads = net.loss_grad(xt, r)
    g = np.concatenate([np.concatenate([gW.ravel(), gb.ravel()]) for gW, gb in grads])
    theta = net.mlp.flat_params()
    idx = rng.choice(theta.size, size=min(n_params, theta.size), replace=False)
    fd = np.empty(len(idx))

    def loss_at(th):
        net.mlp.set_flat_params(th)
        return net.loss_grad(xt, r)[0]

    for j, i in enumerate(idx):
        e = np.zeros_like(theta)
        e[i] = step
        fd[j] = (loss_at(theta + e) - loss_at(theta - e)) / (2 * step)
    net.mlp.set_flat_params(theta)
    return float(np.linalg.norm(fd - g[idx]) / max(np.linalg.norm(g[idx]), 1e-300))


def check_gradients(ctx):
    rng = ctx.rng(12)
    worst = 0.0
    n_nets = ctx.n(20, 4)
    for j in range(n_nets):
        depth = (2, 3)[j % 2]
        width = (8, 32)[(j // 2) % 2]
        S, d = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        net = sn.init_score_net(S, d, width, depth, 5.0, int(rng.integers(2 ** 31)),
                                t_query=float(rng.uniform(0.1, 2)))
        xt = rng.integers(0, S, size=(16, d))
        r = np.exp(rng.normal(size=(16, d, S - 1)))
        worst = max(worst, fd_relative_error(net, xt, r, 50, rng))
    return worst < 1e-5, f"max relative error {worst:.2e} over {n_nets} nets"


def check_clipping_contraction(ctx):
    Cs = [1.5, 2.0, 6.0] if ctx.clip_C is None else [float(ctx.clip_C)]
    n_bad = 0
    for C in Cs:
        v = np.geomspace(1e-3, 1e3, 121)
        s = np.geomspace(1 / C, C, 41) if C > 1 else np.array([1 / C, C])
        try:
            c = sn.clip_score(v, C)
        except ValueError as exc:
            return False, f"C={C}: {exc}"
        n_bad += int(np.sum((c < 1 / C - 1e-15) | (c > C + 1e-15)))
        n_bad += int(np.sum(np.abs(c[:, None] - s[None]) > np.abs(v[:, None] - s[None]) + 1e-15))
    return n_bad == 0, f"{n_bad} violations on the (v, s) grid for C in {Cs}"


def check_epoch_determinism(ctx):
    cfg = presets.smoke_config(epochs=1, n_k=ctx.n(2_000, 200), K=0)
    data = tr.draw_dataset(presets.smoke_p0(), cfg.n_k, np.random.default_rng(0))
    a, la = tr.train(data, cfg, 3.0)
    b, lb = tr.train(data, cfg, 3.0)
    same = all(np.array_equal(x.mlp.flat_params(), y.mlp.flat_params()) for x, y in zip(a, b))
    same &= la.loss == lb.loss
    return same, "bitwise identical" if same else "parameters differ between runs"


def check_interpolation_realizable(ctx):
    rng = ctx.rng(13)
    worst = 0.0
    n_inst = ctx.n(20, 4)
    for _ in range(n_inst):
        S, d = [(2, 1), (2, 2), (3, 1), (2, 3), (4, 1), (3, 2), (2, 4), (4, 2)][int(rng.integers(8))]
        space = sp.StateSpace(S, d)
        target = np.exp(rng.normal(size=(space.size, d, S - 1)))
        net = sn.interpolating_score_net(target, S, d, C=10.0, width=space.size + int(rng.integers(3)),
                                         rng=rng)
        worst = max(worst, np.abs(net.forward_raw(space.states) / target - 1).max())
    return worst < 1e-8, f"max relative error {worst:.2e} over {n_inst} tables"


# -- trainer ------------------------------------------------------------------

def _smoke_pair(ctx, seed):
    cfg = presets.smoke_config(epochs=ctx.n(50, 2), n_k=ctx.n(10_000, 500), seed_train=seed,
                               seed_dataset=seed)
    p0 = presets.smoke_p0()
    data = tr.draw_dataset(p0, cfg.n_k, np.random.default_rng(cfg.seed_dataset))
    _, C = tr.resolve_C(p0)
    return cfg, data, C


def check_training_determinism(ctx):
    cfg, data, C = _smoke_pair(ctx, 3)
    cfg = cfg.replace(epochs=min(cfg.epochs, 3))
    a, la = tr.train(data, cfg, C)
    b, lb = tr.train(data, cfg, C)
    same = all(np.array_equal(x.mlp.flat_params(), y.mlp.flat_params()) for x, y in zip(a, b))
    same &= la.loss == lb.loss and la.t == lb.t
    return same, "bitwise identical nets and logs" if same else "runs differ"


def paired_descent(cfg, data, C):
    """Per-k loss of the initial and the trained nets on identical minibatches."""
    init, _ = tr.train(data, cfg.replace(epochs=0), C)
    init = [n.copy() for n in init]
    trained, _ = tr.train(data, cfg, C)
    probe = cfg.replace(epochs=1)
    _, before = tr.train(data, probe, C, nets=[n.copy() for n in init], update=False)
    _, after = tr.train(data, probe, C, nets=[n.copy() for n in trained], update=False)
    return (np.array([before.loss_curve(k)[0] for k in range(cfg.K)]),
            np.array([after.loss_curve(k)[0] for k in range(cfg.K)]))


def check_descent(ctx):
    n_seeds = 10
    wins = None
    for seed in range(n_seeds):
        cfg, data, C = _smoke_pair(ctx, seed)
        before, after = paired_descent(cfg, data, C)
        w = (after < before).astype(int)
        wins = w if wins is None else wins + w
    pvals = [stats.binomtest(int(w), n_seeds, 0.5, alternative="greater").pvalue for w in wins]
    ok = all(p < 0.01 for p in pvals)
    return ok, f"seeds with lower final loss per k: {wins.tolist()} of {n_seeds}"


def check_update_count(ctx):
    cfg = presets.smoke_config(epochs=3, n_k=ctx.n(1_000, 130), batch_size=64)
    data = tr.draw_dataset(presets.smoke_p0(), cfg.n_k, np.random.default_rng(1))
    _, log = tr.train(data, cfg, 3.0)
    per = cfg.epochs * math.ceil(cfg.n_k / cfg.batch_size)
    counts = log.updates_per_k()
    ok = len(log) == per * cfg.K and np.all(counts == per)
    return bool(ok), f"{len(log)} updates, {per} per interval expected"


def empirical_population_gap(n_k: int, seed: int, nets, p0, base_cfg, pop) -> float:
    cfg = base_cfg.replace(n_k=n_k, batch_size=min(base_cfg.batch_size, n_k), epochs=1,
                           seed_train=seed)
    data = tr.draw_dataset(p0, n_k, np.random.default_rng([seed, n_k]))
    _, log = tr.train(data, cfg, nets[0].C, nets=[n.copy() for n in nets], update=False)
    emp = np.array([log.loss_curve(k)[0] for k in range(cfg.K)])
    return float(np.mean(np.abs(emp - pop)))


def check_empirical_population_gap(ctx):
    p0 = presets.smoke_p0()
    base = presets.smoke_config()
    _, C = tr.resolve_C(p0)
    nets, _ = tr.train(np.zeros((base.batch_size, 1), dtype=int), base.replace(epochs=0,
                       n_k=base.batch_size), C)
    pop = np.array([br.expected_minibatch_loss(p0, sm.tabulate(nets[k], p0.space, clipped=False),
                                               k, base.h, base.delta) for k in range(base.K)])
    grid = [100, 1_000, 10_000]
    n_seeds = ctx.n(10, 3)
    med = [float(np.median([empirical_population_gap(n, s, nets, p0, base, pop)
                            for s in range(n_seeds)])) for n in grid]
    ok = all(b < a for a, b in zip(med, med[1:]))
    return ok, "median |gap| by n_k: " + ", ".join(f"{n}:{m:.4f}" for n, m in zip(grid, med))


# -- reverse_sampler ----------------------------------------------------------

def _sampler_fixtures(ctx):
    """(name, nets, SamplerConfig, space) for the smoke sampling settings."""
    out = []
    space = sp.StateSpace(2, 1)
    out.append(("scores=1, S=2 d=1", [sm.constant_table(1.0, space)] * 5, sm.SamplerConfig(5, 0.25),
                space))
    for S, d, K, h in ((2, 1, 5, 0.25), (3, 2, 4, 0.25)):
        space = sp.StateSpace(S, d)
        nets = [sn.init_score_net(S, d, 16, 2, 4.0, 100 + k, t_query=(k + 1) * h, k=k)
                for k in range(K)]
        for net in nets:  # spread the outputs so clipping is active
            net.mlp.layers[-1][0][:] *= 4.0
        out.append((f"random nets, S={S} d={d}", nets, sm.SamplerConfig(K, h, seed=S), space))
    return out


def check_sampler_exactness(ctx):
    n = 100_000
    worst = 0.0
    names = []
    for name, nets, cfg, space in _sampler_fixtures(ctx):
        z = sm.sample_reverse(nets, cfg, n, space)
        exact = sm.exact_reverse_marginal(nets, cfg, space).probs
        d = tv(empirical(z, space), exact)
        worst = max(worst, d)
        names.append(f"{name}: {d:.4f}")
    return worst < 0.01, "; ".join(names)


def check_series_cutoff(ctx):
    worst = 0.0
    for _, nets, cfg, space in _sampler_fixtures(ctx):
        a = sm.exact_reverse_marginal(nets, cfg, space, tail_tol=1e-12).probs
        b = sm.exact_reverse_marginal(nets, cfg, space, tail_tol=1e-15).probs
        worst = max(worst, tv(a, b))
    return worst < 1e-9, f"max TV change {worst:.2e}"


def check_jump_counts(ctx):
    rng = ctx.rng(14)
    space = sp.StateSpace(3, 2)
    table = so.ScoreTable(np.exp(rng.normal(size=(space.size, 2, 2))), space)
    n = ctx.n(10_000, 1_000)
    h = 0.3
    z = rng.integers(0, 3, size=(n, 2))
    _, N, flips = sm.uniformization_interval(table, z, h, rng, space)
    mu = sm.lambda_k(table, space) / space.S * h
    z_score = (N.mean() - mu) / math.sqrt(mu / n)
    ok = abs(z_score) <= 3 and np.all(flips <= N)
    return bool(ok), f"mean N {N.mean():.4f} vs {mu:.4f} (z = {z_score:+.2f})"


def first_order_error(table: so.ScoreTable, h: float) -> float:
    space = table.space
    pi = sp.stationary(space).probs
    cfg = sm.SamplerConfig(1, h)
    exact = sm.exact_reverse_marginal([table], cfg, space).probs
    Q = so.reverse_generator(table)
    return float(np.abs(exact - (pi + h * Q.T @ pi)).sum())


def check_first_order_slope(ctx):
    rng = ctx.rng(15)
    space = sp.StateSpace(3, 2)
    table = so.ScoreTable(np.exp(rng.normal(size=(space.size, 2, 2))), space)
    hs = np.array([0.2, 0.1, 0.05, 0.025])
    slope = loglog_slope(hs, [first_order_error(table, h) for h in hs])
    return 1.8 <= slope <= 2.2, f"log-log slope {slope:.3f} (band [1.8, 2.2])"


# -- diagnostics --------------------------------------------------------------

def random_error_case(rng, space):
    p0 = random_p0(rng, space.S, space.d, floor=0.01)
    t = float(rng.uniform(0.05, 2.0))
    raw = np.exp(rng.normal(scale=rng.uniform(0.1, 2.0), size=(space.size, space.d, space.S - 1)))
    C = float(rng.uniform(1.05, 6.0))
    return p0, so.ScoreTable(raw, space), C, t


def check_error_terms(ctx):
    rng = ctx.rng(16)
    space = sp.StateSpace(3, 2)
    n_bad = 0
    n_cases = ctx.n(100, 10)
    for _ in range(n_cases):
        p0, raw, C, t = random_error_case(rng, space)
        n_bad += len(dg.error_terms(p0, raw, C, t).violations())
    return n_bad == 0, f"{n_bad} violations over {n_cases} cases"


def check_truncation_bound(ctx):
    rng = ctx.rng(17)
    n_bad = 0
    n_cases = ctx.n(200, 20)
    for _ in range(n_cases):
        p0 = random_p0(rng, *random_small_space(rng))
        val, bound = dg.truncation_error(p0, float(rng.uniform(0.0, 10.0)))
        n_bad += val > bound + 1e-15
    return n_bad == 0, f"{n_bad} violations over {n_cases} configs"


def truncation_decay_rate(p0: sp.DistTable, Ts=(2.0, 4.0, 6.0, 8.0)) -> float:
    vals = [dg.truncation_error(p0, T)[0] for T in Ts]
    return float(stats.linregress(Ts, np.log(vals)).slope)


def check_truncation_rate(ctx):
    p0 = sp.DistTable(np.array([1.0, 0.0]), sp.StateSpace(2, 1))
    rate = truncation_decay_rate(p0)
    return abs(rate + 1.0) <= 0.1, f"fitted d log KL / dT = {rate:.4f} (expected -1.0 +/- 0.1)"


def check_hardness(ctx):
    eps = np.geomspace(1e-4, 0.039, ctx.n(60, 10))
    bad = [e for e in eps if not dg.hardness_pair(e)[1] > 7.5 * e]
    return not bad, f"{len(bad)} failures over {len(eps)} eps values"


def check_kl_stability(ctx):
    rng = ctx.rng(18)
    worst = 0.0
    for _ in range(ctx.n(100, 10)):
        p = random_p0(rng, *random_small_space(rng), floor=1e-4)
        q = random_p0(rng, p.space.S, p.space.d, floor=1e-4)
        w = p.probs * (1 + rng.uniform(-1e-12, 1e-12, size=p.space.size))
        p2 = sp.DistTable.from_unnormalized(w, p.space)
        worst = max(worst, abs(dg.kl(p2, q) - dg.kl(p, q)))
    return worst <= 1e-9, f"max KL change {worst:.2e}"


# -- cli ----------------------------------------------------------------------

_TINY = ["--set", "epochs=2", "--set", "n_k=200", "--set", "T=0.75", "--set", "h=0.25"]


def _quiet(main):
    """Run the CLI entry point with its console output captured."""

    def run(argv):
        sink = _io.StringIO()
        with contextlib.redirect_stdout(sink), contextlib.redirect_stderr(sink):
            return main(argv)

    return run


def check_cli_determinism(ctx):
    from .cli import main

    main = _quiet(main)

    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for run in ("a", "b"):
            out = Path(tmp) / run
            if main(["train", "--out", str(out)] + _TINY + ["--set", f"p0={presets.SMOKE_P0}"]) != 0:
                return False, "train failed"
            if main(["sample", "--out", str(out), "--count", "500"]) != 0:
                return False, "sample failed"
            outs.append(out)
        files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
        diff = [str(f) for f in files if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes()]
    return not diff, "identical outputs" if not diff else f"differing files: {diff}"


def check_cli_exit_codes(ctx):
    from .cli import main

    main = _quiet(main)

    with tempfile.TemporaryDirectory() as tmp:
        got = {
            "unknown key": main(["train", "--out", tmp, "--set", "bogus=1"]),
            "missing dataset": main(["train", "--out", tmp]),
            "eps out of range": main(["hardness", "--eps", "0.05"]),
            "oracle cap": main(["evaluate", "--out", tmp, "--set", "S=2", "--set", "d=21",
                                "--set", "p0=uniform"]),
        }
    want = {"unknown key": 2, "missing dataset": 2, "eps out of range": 2, "oracle cap": 5}
    bad = {k: v for k, v in got.items() if v != want[k]}
    return not bad, "all codes as documented" if not bad else f"unexpected codes {bad}"


def check_cli_round_trips(ctx):
    from . import io

    rng = ctx.rng(19)
    problems = []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        space = sp.StateSpace(3, 2)
        states = rng.integers(0, 3, size=(50, 2))
        io.write_states(tmp / "d.txt", states)
        if not np.array_equal(io.read_states(tmp / "d.txt", space), states):
            problems.append("dataset")
        net = sn.init_score_net(3, 2, 8, 3, 4.5, 7, t_query=0.5, k=1)
        sn.save_checkpoint(net, tmp / "n.bin", K=4, h=0.5, delta=0.0)
        net2, _ = sn.load_checkpoint(tmp / "n.bin")
        sn.save_checkpoint(net2, tmp / "m.bin", K=4, h=0.5, delta=0.0)
        if (tmp / "n.bin").read_bytes() != (tmp / "m.bin").read_bytes():
            problems.append("checkpoint")
        rows = [dg.SweepRow(100, 0, 0.1, 0.2, 3.0), dg.SweepRow(1000, 1, 0.01, 0.02, 4.5)]
        dg.write_sweep_csv(rows, tmp / "s.csv")
        back = dg.read_sweep_csv(tmp / "s.csv")
        if [(r.n_k, r.seed, r.mean_score_err, r.kl) for r in back] != \
                [(r.n_k, r.seed, r.mean_score_err, r.kl) for r in rows]:
            problems.append("sweep csv")
        table = so.ScoreTable(np.exp(rng.normal(size=(space.size, 2, 2))), space)
        table.to_csv(tmp / "t.csv")
        if not np.array_equal(so.ScoreTable.from_csv(tmp / "t.csv", space).values, table.values):
            problems.append("score table csv")
        cfg, extras = io.load_run_config(None, {"S": "3", "d": "2", "p0": presets.SWEEP_P0})
        (tmp / "c.cfg").write_text(io.format_config(cfg, extras))
        if io.load_run_config(tmp / "c.cfg") != (cfg, extras):
            problems.append("config")
    return not problems, "all formats round-trip" if not problems else f"broken: {problems}"


SUITES: Dict[str, List[Callable]] = {
    "state_process": [check_semigroup, check_forward_consistency, check_forward_monte_carlo,
                      check_rate_kernel_link],
    "score_oracle": [check_score_bound_suite, check_reciprocity, check_detailed_balance,
                     check_score_movement],
    "bregman_loss": [check_sandwich, check_three_point_divergence, check_three_point_squared,
                     check_loss_identity],
    "score_net": [check_gradients, check_clipping_contraction, check_epoch_determinism,
                  check_interpolation_realizable],
    "trainer": [check_training_determinism, check_descent, check_update_count,
                check_empirical_population_gap],
    "reverse_sampler": [check_sampler_exactness, check_series_cutoff, check_jump_counts,
                        check_first_order_slope],
    "diagnostics": [check_error_terms, check_truncation_bound, check_truncation_rate,
                    check_hardness, check_kl_stability],
    "cli": [check_cli_determinism, check_cli_exit_codes, check_cli_round_trips],
}


def run_suites(scale: float = 1.0, clip_C=None, suites=None, seed: int = 0,
               progress: Callable[[CheckResult], None] | None = None) -> List[CheckResult]:
    ctx = Ctx(scale, clip_C, seed)
    names = list(SUITES) if suites is None else list(suites)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s) {unknown}; available: {list(SUITES)}")
    results = []
    for suite in names:
        for check in SUITES[suite]:
            t0 = time.perf_counter()
            try:
                passed, detail = check(ctx)
            except Exception as exc:  # a crashing check is a failing check
                passed, detail = False, f"{type(exc).__name__}: {exc}"
            res = CheckResult(suite, check.__name__.removeprefix("check_"), bool(passed), detail,
                              time.perf_counter() - t0)
            results.append(res)
            if progress:
                progress(res)
    return results


def format_result(r: CheckResult) -> str:
    return f"{'PASS' if r.passed else 'FAIL'}  {r.suite:<16} {r.name:<30} {r.detail}"


def format_report(results: List[CheckResult]) -> str:
    lines = [format_result(r) for r in results]
    by_suite = {}
    for r in results:
        by_suite.setdefault(r.suite, []).append(r.passed)
    lines.append("")
    for suite, flags in by_suite.items():
        lines.append(f"suite {suite:<16} {'PASS' if all(flags) else 'FAIL'} "
                     f"({sum(flags)}/{len(flags)} checks)")
    return "\n".join(lines)
