"""Feed-forward score networks with hand-written backpropagation.

Inputs are one-hot encodings of the ``d`` coordinates followed by one
time slot; outputs pass through ``exp`` so raw scores are strictly positive.
Hidden layers use ``tanh`` (1-Lipschitz, zero at zero, saturating).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .exceptions import TrainingAborted

Layer = Tuple[np.ndarray, np.ndarray]

# log-score magnitude beyond which exp() is clamped; 700 keeps exp finite
_MAX_LOGIT = 700.0


def one_hot(x: np.ndarray, S: int) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.int64))
    n, d = x.shape
    out = np.zeros((n, d * S))
    out[np.arange(n)[:, None], np.arange(d) * S + x] = 1.0
    return out


@dataclass
class MLP:
    """Affine layers with ``tanh`` between them and a linear readout."""

    layers: List[Layer]

    @property
    def widths(self) -> List[int]:
        return [self.layers[0][0].shape[0]] + [W.shape[1] for W, _ in self.layers]

    def __call__(self, X) -> np.ndarray:
        a = np.atleast_2d(np.asarray(X, dtype=float))
        for W, b in self.layers[:-1]:
            a = np.tanh(a @ W + b)
        W, b = self.layers[-1]
        return a @ W + b

    def forward_cache(self, X):
        acts = [np.atleast_2d(np.asarray(X, dtype=float))]
        for W, b in self.layers[:-1]:
            acts.append(np.tanh(acts[-1] @ W + b))
        W, b = self.layers[-1]
        return acts[-1] @ W + b, acts

    def backward(self, acts, dout) -> List[Layer]:
        """Parameter gradients given ``dL/d(output)`` and cached activations."""
        grads = [None] * len(self.layers)
        delta = dout
        for li in range(len(self.layers) - 1, -1, -1):
            W, _ = self.layers[li]
            a = acts[li]
            grads[li] = (a.T @ delta, delta.sum(axis=0))
            if li > 0:
                delta = (delta @ W.T) * (1.0 - a * a)
        return grads

    def copy(self) -> "MLP":
        return MLP([(W.copy(), b.copy()) for W, b in self.layers])

    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in self.layers)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.layers])

    def set_flat_params(self, theta: np.ndarray):
        pos = 0
        for W, b in self.layers:
            W[...] = theta[pos:pos + W.size].reshape(W.shape)
            pos += W.size
            b[...] = theta[pos:pos + b.size]
            pos += b.size


def init_mlp(widths: Sequence[int], rng) -> MLP:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    if len(widths) < 2 or any(int(w) < 1 for w in widths):
        raise ValueError(f"invalid layer widths {list(widths)}")
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append((W, b))
    return MLP(layers)


@dataclass
class ScoreNet:
    """Score estimator for one time interval.

    ``t_query`` is the (frozen) time fed to the time slot; ``C`` is the
    clipping level applied by :meth:`forward_clipped`.
    """

    mlp: MLP
    S: int
    d: int
    C: float
    t_query: float = 0.0
    k: int = 0
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_out(self) -> int:
        return self.d * (self.S - 1)

    def features(self, x) -> np.ndarray:
        oh = one_hot(x, self.S)
        return np.hstack([oh, np.full((len(oh), 1), self.t_query)])

    def logits(self, x) -> np.ndarray:
        return self.mlp(self.features(x))

    def forward_raw(self, x) -> np.ndarray:
        """Unclipped positive scores, shape ``(n, d, S-1)``."""
        z = np.clip(self.logits(x), -_MAX_LOGIT, _MAX_LOGIT)
        return np.exp(z).reshape(-1, self.d, self.S - 1)

    def forward_clipped(self, x) -> np.ndarray:
        return clip_score(self.forward_raw(x), self.C)

    def loss_grad(self, xt, targets):
        """Score-entropy loss on raw outputs and its exact parameter gradient."""
        xt = np.atleast_2d(xt)
        targets = np.asarray(targets, dtype=float).reshape(len(xt), -1)
        z, acts = self.mlp.forward_cache(self.features(xt))
        s = np.exp(np.clip(z, -_MAX_LOGIT, _MAX_LOGIT))
        n = len(xt)
        loss = float(np.sum(s - targets * z) / (n * self.S))
        # d/dz (e^z - r z) = e^z - r
        grads = self.mlp.backward(acts, (s - targets) / (n * self.S))
        return loss, grads

    def copy(self) -> "ScoreNet":
        return ScoreNet(self.mlp.copy(), self.S, self.d, self.C, self.t_query, self.k, self.seed,
                        dict(self.meta))


def init_score_net(S: int, d: int, hidden: int, depth: int, C: float, seed: int,
                   t_query: float = 0.0, k: int = 0) -> ScoreNet:
    """Random score net with ``depth`` affine layers of width ``hidden``."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    widths = [d * S + 1] + [hidden] * (depth - 1) + [d * (S - 1)]
    mlp = init_mlp(widths, np.random.default_rng(seed))
    return ScoreNet(mlp, S, d, C, t_query=t_query, k=k, seed=seed)


def clip_score(raw, C: float) -> np.ndarray:
    """Componentwise projection onto ``[1/C, C]``."""
    if not C > 1:
        raise ValueError(f"clip bound must exceed 1, got C={C}")
    return np.clip(np.asarray(raw, dtype=float), 1.0 / C, C)


def sgd_step(net, grads: List[Layer], lr: float):
    """In-place ``theta <- theta - lr * grad``; accepts a ScoreNet or an MLP."""
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    mlp = net.mlp if isinstance(net, ScoreNet) else net
    for (W, b), (gW, gb) in zip(mlp.layers, grads):
        if not (np.all(np.isfinite(gW)) and np.all(np.isfinite(gb))):
            raise TrainingAborted("non-finite gradient")
        W -= lr * gW
        b -= lr * gb
    return net


# -- exact interpolation -------------------------------------------------------

@dataclass
class Interpolant:
    mlp: MLP
    alpha: float
    direction: np.ndarray
    scalar: bool = False

    def __call__(self, X) -> np.ndarray:
        out = self.mlp(X)
        return out[:, 0] if self.scalar else out


def construct_interpolant(points, values, width: int | None = None, rng=None,
                          cond_max: float = 1e12, alpha_cap: float = 2.0 ** 40,
                          rtol: float = 1e-10) -> Interpolant:
    """Depth-2 ``tanh`` network through ``(points[i], values[i])``.

    Projects the points on a random direction with pairwise distinct
    projections, places one step unit just below each sorted projection, and
    doubles the slope ``alpha`` until the hidden activation matrix is well
    conditioned (it tends to a triangular matrix).  ``values`` may be
    ``(n,)`` or ``(n, m)``.  Hidden units beyond ``n`` get zero readout.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    Y = np.asarray(values, dtype=float)
    scalar = Y.ndim == 1
    Y = Y.reshape(len(X), -1)
    n, dim = X.shape
    width = n if width is None else int(width)
    if width < n:
        raise ValueError(f"width {width} is smaller than the number of points {n}")
    rng = np.random.default_rng(0) if rng is None else rng

    c0 = Y.mean(axis=0)
    a = None
    for _ in range(64):
        cand = rng.standard_normal(dim)
        t = X @ cand
        ts = np.sort(t)
        if n == 1 or np.min(np.diff(ts)) > 1e-9 * max(1.0, np.abs(ts).max()):
            a = cand
            break
    if a is None:
        raise ValueError("no direction separates the points (are they distinct?)")

    t = X @ a
    order = np.argsort(t)
    ts = t[order]
    biases = np.empty(n)
    if n:
        gap0 = np.diff(ts).min() if n > 1 else 1.0
        biases[0] = ts[0] - gap0 / 2
        biases[1:] = 0.25 * ts[:-1] + 0.75 * ts[1:]  # inside ((t_{k-1}+t_k)/2, t_k)

    alpha = 1.0
    while True:
        A = np.tanh(alpha * (t[:, None] - biases[None, :]))
        if np.linalg.cond(A) < cond_max:
            c = np.linalg.solve(A, Y - c0)
            if np.max(np.abs(A @ c - (Y - c0))) <= rtol * max(1.0, np.abs(Y).max()):
                break
        if alpha >= alpha_cap:
            raise np.linalg.LinAlgError("activation matrix still singular at the alpha cap")
        alpha *= 2.0

    W1 = np.zeros((dim, width))
    b1 = np.zeros(width)
    W1[:, :n] = alpha * a[:, None]
    b1[:n] = -alpha * biases
    W2 = np.zeros((width, Y.shape[1]))
    W2[:n] = c
    return Interpolant(MLP([(W1, b1), (W2, c0.copy())]), alpha, a, scalar)


def interpolating_score_net(table_values: np.ndarray, S: int, d: int, C: float,
                            width: int | None = None, t_query: float = 0.0,
                            rng=None) -> ScoreNet:
    """Score net whose raw output reproduces ``table_values`` on every state.

    ``table_values`` has shape ``(S**d, d, S-1)`` in state-index order.
    """
    from .state_process import StateSpace

    sp = StateSpace(S, d)
    feats = np.hstack([one_hot(sp.states, S), np.full((sp.size, 1), t_query)])
    logs = np.log(np.asarray(table_values, dtype=float).reshape(sp.size, -1))
    interp = construct_interpolant(feats, logs, width=width, rng=rng)
    return ScoreNet(interp.mlp, S, d, C, t_query=t_query)


# -- checkpoints -----------------------------------------------------------------

MAGIC = b"DSDNET01"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<8sIIIIIIddddQ")  # magic, version, S, d, K, k, n_widths, C, t_query, h, delta, seed


def save_checkpoint(net: ScoreNet, path, K: int, h: float, delta: float):
    """Write header + widths + flat little-endian float64 parameters."""
    widths = net.mlp.widths
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, CHECKPOINT_VERSION, net.S, net.d, K, net.k, len(widths),
                              float(net.C), float(net.t_query), float(h), float(delta),
                              int(net.seed)))
        fh.write(np.asarray(widths, dtype="<u4").tobytes())
        fh.write(net.mlp.flat_params().astype("<f8").tobytes())


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(net, header_dict)``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: file too short for a checkpoint header")
    magic, version, S, d, K, k, nw, C, tq, h, delta, seed = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a score-net checkpoint")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = _HEADER.size
    widths = np.frombuffer(blob, dtype="<u4", count=nw, offset=off).astype(int).tolist()
    off += 4 * nw
    theta = np.frombuffer(blob, dtype="<f8", offset=off).astype(float)
    layers = [(np.zeros((i, o)), np.zeros(o)) for i, o in zip(widths[:-1], widths[1:])]
    mlp = MLP(layers)
    if theta.size != mlp.n_params():
        raise ValueError(f"{path}: expected {mlp.n_params()} parameters, found {theta.size}")
    mlp.set_flat_params(theta)
    net = ScoreNet(mlp, S, d, C, t_query=tq, k=k, seed=seed)
    header = dict(S=S, d=d, K=K, k=k, widths=widths, C=C, t_query=tq, h=h, delta=delta, seed=seed,
                  version=version)
    return net, header
