"""Discrete-state score-based diffusion with exact small-scale oracles."""
from .bregman import bregman_I, neg_entropy, population_se, se_minibatch_loss
from .diagnostics import (ErrorTerms, discretization_gap, error_terms, hardness_pair, kl, sweep,
                          truncation_error)
from .estimator import DiscreteScoreDiffusion
from .sampler import SamplerConfig, exact_reverse_marginal, sample_reverse
from .score_net import ScoreNet, clip_score, construct_interpolant, init_score_net
from .score_oracle import ScoreTable, ratio_targets, reverse_generator, score_bound, true_score
from .state_process import DistTable, StateSpace, forward_marginal, sample_forward, token_kernel
from .trainer import RunConfig, train

__version__ = "0.1.0"

__all__ = [
    "DiscreteScoreDiffusion", "DistTable", "ErrorTerms", "RunConfig", "SamplerConfig", "ScoreNet",
    "ScoreTable", "StateSpace", "bregman_I", "clip_score", "construct_interpolant",
    "discretization_gap", "error_terms", "exact_reverse_marginal", "forward_marginal",
    "hardness_pair", "init_score_net", "kl", "neg_entropy", "population_se", "ratio_targets",
    "reverse_generator", "sample_forward", "sample_reverse", "score_bound", "se_minibatch_loss",
    "sweep", "token_kernel", "train", "true_score", "truncation_error",
]
