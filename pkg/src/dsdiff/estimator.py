"""scikit-learn style front end: fit on states, predict scores, sample."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InvalidStateError
from .sampler import SamplerConfig, exact_reverse_marginal, sample_reverse, tabulate
from .score_net import clip_score
from .score_oracle import ScoreTable
from .state_process import DistTable, StateSpace
from .trainer import RunConfig, resolve_C, train


def check_states(X, n_symbols: int, n_features: int | None = None) -> np.ndarray:
    """Validate an ``(n, d)`` array of integer states with symbols in ``[0, n_symbols)``."""
    X = check_array(X, dtype=None, ensure_min_samples=1)
    if not np.issubdtype(X.dtype, np.integer):
        if not np.all(np.mod(X, 1) == 0):
            raise InvalidStateError("states must contain integer symbols")
        X = X.astype(np.int64)
    if np.any(X < 0) or np.any(X >= n_symbols):
        raise InvalidStateError(f"symbols must lie in [0, {n_symbols - 1}]")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, but the estimator was fitted with {n_features}")
    return X.astype(np.int64, copy=False)


class DiscreteScoreDiffusion(BaseEstimator):
    """Score-entropy trained discrete diffusion on ``{0..S-1}^d``.

    Parameters
    ----------
    n_symbols : int
        Alphabet size ``S``.
    horizon, step, delta : float
        Diffusion time ``T``, interval length ``h`` and early-stop offset;
        ``T = K h + delta`` must hold for an integer ``K``.
    hidden_width, depth : int
        Width and number of affine layers of each per-interval network.
    learning_rate, batch_size, epochs
        Plain SGD settings.
    clip : "auto" or float
        Clip level ``C``; ``"auto"`` uses 1.5 times the ratio bound of
        ``p0`` (or of the Laplace-smoothed training data when ``p0`` is None).
    smoothing_alpha : float
        Pseudo-count mass used when estimating the ratio bound from data.
    p0 : DistTable, optional
        Analytic data law, used only to resolve ``C``.
    random_state : int
        Seed for network initialisation and training noise.
    """

    def __init__(self, n_symbols=2, horizon=5.0, step=0.25, delta=0.0, hidden_width=32, depth=2,
                 learning_rate=1e-2, batch_size=64, epochs=50, clip="auto", smoothing_alpha=1.0,
                 p0=None, random_state=0):
        self.n_symbols = n_symbols
        self.horizon = horizon
        self.step = step
        self.delta = delta
        self.hidden_width = hidden_width
        self.depth = depth
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.clip = clip
        self.smoothing_alpha = smoothing_alpha
        self.p0 = p0
        self.random_state = random_state

    def _run_config(self, n: int, d: int) -> RunConfig:
        return RunConfig(S=self.n_symbols, d=d, T=self.horizon, h=self.step, delta=self.delta,
                         lr=self.learning_rate, batch_size=min(self.batch_size, n), epochs=self.epochs,
                         n_k=n, width=self.hidden_width, depth=self.depth,
                         C=str(self.clip), smoothing_alpha=self.smoothing_alpha,
                         seed_train=int(self.random_state))

    def fit(self, X, y=None):
        X = check_states(X, self.n_symbols)
        n, d = X.shape
        self.config_ = self._run_config(n, d)
        self.space_ = StateSpace(self.n_symbols, d)
        if self.clip == "auto":
            source = self.p0 if self.p0 is not None else X
            self.bound_, self.C_ = resolve_C(source, self.space_, self.smoothing_alpha)
        else:
            self.bound_, self.C_ = None, float(self.clip)
        self.nets_, self.training_log_ = train(X, self.config_, self.C_)
        self.n_features_in_ = d
        return self

    @property
    def n_intervals_(self) -> int:
        check_is_fitted(self, "nets_")
        return len(self.nets_)

    def predict_scores(self, X, k: int, clipped: bool = True) -> np.ndarray:
        """Scores of interval ``k`` at states ``X``, shape ``(n, d, S-1)``."""
        check_is_fitted(self, "nets_")
        X = check_states(X, self.n_symbols, self.n_features_in_)
        net = self.nets_[k]
        return net.forward_clipped(X) if clipped else net.forward_raw(X)

    def score_table(self, k: int, clipped: bool = True) -> ScoreTable:
        check_is_fitted(self, "nets_")
        return tabulate(self.nets_[k], self.space_, clipped=clipped)

    def sampler_config(self, seed: int = 0) -> SamplerConfig:
        cfg = self.config_
        return SamplerConfig(cfg.K, cfg.h, cfg.delta, seed)

    def sample(self, n_samples: int = 1, random_state=None) -> np.ndarray:
        """Draw states from the learned reverse process."""
        check_is_fitted(self, "nets_")
        rng = np.random.default_rng(random_state)
        return sample_reverse(self.nets_, self.sampler_config(), n_samples, self.space_, rng)

    def output_distribution(self) -> DistTable:
        """Exact law of :meth:`sample`'s output (small state spaces only)."""
        check_is_fitted(self, "nets_")
        return exact_reverse_marginal(self.nets_, self.sampler_config(), self.space_)

    def clip_scores(self, raw) -> np.ndarray:
        check_is_fitted(self, "C_")
        return clip_score(raw, self.C_)
