"""Minibatch SGD on the score-entropy loss, one network per time interval."""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .exceptions import TrainingAborted
from .score_net import ScoreNet, init_score_net, sgd_step
from .score_oracle import ratio_targets, score_bound, smoothed_empirical
from .state_process import DistTable, StateSpace, sample_forward

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Every knob of a training / sampling run.

    ``K`` is derived from ``T``, ``h`` and ``delta`` when left at 0.  ``C`` is
    ``"auto"`` (1.5 times the exact ratio bound) or an explicit number.
    """

    S: int = 2
    d: int = 1
    T: float = 5.0
    h: float = 0.25
    delta: float = 0.0
    K: int = 0
    lr: float = 1e-2
    batch_size: int = 64
    epochs: int = 50
    n_k: int = 1000
    width: int = 32
    depth: int = 2
    C: str = "auto"
    smoothing_alpha: float = 1.0
    seed_dataset: int = 0
    seed_train: int = 0
    seed_sample: int = 0
    p0: str = ""
    dataset: str = ""

    def __post_init__(self):
        self.S, self.d, self.K = int(self.S), int(self.d), int(self.K)
        self.T, self.h, self.delta = float(self.T), float(self.h), float(self.delta)
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.K == 0:
            self.K = int(round((self.T - self.delta) / self.h))
        if self.K < 1:
            raise ValueError("need at least one interval (K >= 1)")
        if abs(self.K * self.h + self.delta - self.T) > 1e-12 * max(1.0, self.T):
            raise ValueError(f"T={self.T} != K*h + delta = {self.K * self.h + self.delta}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.n_k < self.batch_size:
            raise ValueError(f"need n_k >= batch_size >= 1 (n_k={self.n_k}, batch_size={self.batch_size})")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @property
    def space(self) -> StateSpace:
        return StateSpace(self.S, self.d)

    def t_query(self, k: int) -> float:
        return (k + 1) * self.h + self.delta

    def replace(self, **changes) -> "RunConfig":
        if "K" not in changes and {"T", "h", "delta"} & set(changes):
            changes["K"] = 0
        return dataclasses.replace(self, **changes)


@dataclass
class TrainingLog:
    """Per-update records; :meth:`epoch_rows` gives one row per (epoch, k)."""

    epoch: List[int] = field(default_factory=list)
    k: List[int] = field(default_factory=list)
    batch: List[int] = field(default_factory=list)
    t: List[float] = field(default_factory=list)
    loss: List[float] = field(default_factory=list)
    max_abs_param: List[float] = field(default_factory=list)

    def __len__(self):
        return len(self.loss)

    def append(self, epoch, k, batch, t, loss):
        self.epoch.append(epoch)
        self.k.append(k)
        self.batch.append(batch)
        self.t.append(t)
        self.loss.append(loss)

    def updates_per_k(self) -> np.ndarray:
        return np.bincount(np.asarray(self.k, dtype=int))

    def epoch_rows(self):
        """``(epoch, k, mean t drawn, mean loss)`` ordered by (epoch, k)."""
        e = np.asarray(self.epoch)
        k = np.asarray(self.k)
        t = np.asarray(self.t)
        loss = np.asarray(self.loss)
        rows = []
        for key in sorted(set(zip(e.tolist(), k.tolist()))):
            m = (e == key[0]) & (k == key[1])
            rows.append((key[0], key[1], float(t[m].mean()), float(loss[m].mean())))
        return rows

    def loss_curve(self, k: int) -> np.ndarray:
        """Epoch-mean loss for interval ``k``."""
        return np.array([r[3] for r in self.epoch_rows() if r[1] == k])


def draw_dataset(p0: DistTable, n: int, rng) -> np.ndarray:
    """``n`` i.i.d. states from ``p0`` as an ``(n, d)`` integer array."""
    if n <= 0:
        raise ValueError("dataset size must be positive")
    return p0.sample(n, rng)


def resolve_C(source, space: Optional[StateSpace] = None, alpha: float = 1.0):
    """``(B, C)`` with ``C = 1.5 B``.

    ``source`` is an analytic :class:`DistTable` or a dataset array; a dataset
    is Laplace-smoothed first so the ratio bound is finite.
    """
    if not isinstance(source, DistTable):
        data = np.asarray(source)
        if data.size == 0:
            raise ValueError("cannot resolve C from an empty dataset")
        if space is None:
            raise ValueError("a state space is needed to smooth a dataset")
        source = smoothed_empirical(data, space, alpha)
    rep = score_bound(source)
    return rep.B, rep.C


def train(dataset, config: RunConfig, C: float, nets: Optional[List[ScoreNet]] = None,
          update: bool = True):
    """Run the per-interval SGD loop and return ``(nets, log)``.

    Each interval ``k`` owns an independent RNG stream spawned from
    ``config.seed_train``, so results do not depend on loop order.  Every
    (epoch, k) applies ``ceil(n_k / batch_size)`` updates, each with one
    fresh ``t ~ Unif(kh + delta, (k+1)h + delta]`` shared by the minibatch.
    With ``update=False`` the loop only records losses of the given nets.
    """
    cfg = config
    data = cfg.space.check_states(np.asarray(dataset))
    streams = np.random.SeedSequence(cfg.seed_train).spawn(cfg.K)
    rngs = []
    if nets is None:
        nets = []
        for k, ss in enumerate(streams):
            init_seed, train_seed = ss.generate_state(2, dtype=np.uint32)
            nets.append(init_score_net(cfg.S, cfg.d, cfg.width, cfg.depth, C, int(init_seed),
                                       t_query=cfg.t_query(k), k=k))
            rngs.append(np.random.default_rng(int(train_seed)))
    else:
        for ss in streams:
            rngs.append(np.random.default_rng(int(ss.generate_state(2, dtype=np.uint32)[1])))

    n = len(data)
    n_batches = math.ceil(cfg.n_k / cfg.batch_size)
    trace = TrainingLog()
    for epoch in range(cfg.epochs):
        for k in range(cfg.K):
            rng = rngs[k]
            net = nets[k]
            lo = k * cfg.h + cfg.delta
            for b in range(n_batches):
                x0 = data[rng.integers(0, n, cfg.batch_size)]
                t = lo + cfg.h * (1.0 - rng.random())
                xt = sample_forward(x0, t, cfg.S, rng)
                r = ratio_targets(x0, xt, t, cfg.S)
                loss, grads = net.loss_grad(xt, r)
                if not np.isfinite(loss):
                    raise TrainingAborted(f"non-finite loss at epoch={epoch} k={k} batch={b}",
                                          epoch, k, b)
                if not update:
                    trace.append(epoch, k, b, t, loss)
                    continue
                try:
                    sgd_step(net, grads, cfg.lr)
                except TrainingAborted as exc:
                    raise TrainingAborted(f"{exc} at epoch={epoch} k={k} batch={b}", epoch, k, b)
                trace.append(epoch, k, b, t, loss)
    # weights are left unconstrained; record their size for inspection
    trace.max_abs_param = [float(np.abs(net.mlp.flat_params()).max()) for net in nets]
    for k, w in enumerate(trace.max_abs_param):
        log.debug("interval %d: max |theta| = %.4g", k, w)
    return nets, trace
