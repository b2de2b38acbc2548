"""Named configurations shared by the verify suites, the tests and ``configs/``."""
from __future__ import annotations

import numpy as np

from .state_process import DistTable
from .trainer import RunConfig

SMOKE_P0 = "product:0.7,0.3"

# Structured product law on {0,1,2}^2 used by the sample-complexity sweep.
SWEEP_MARGINALS = np.array([[0.5, 0.3, 0.2],
                            [0.2, 0.3, 0.5]])
SWEEP_P0 = "product:0.5,0.3,0.2;0.2,0.3,0.5"
SWEEP_N_GRID = (100, 1000, 10000, 100000)
SWEEP_SEEDS = (0, 1, 2, 3, 4)


def smoke_config(**changes) -> RunConfig:
    """``S=2, d=1, K=5`` with ``h=0.25``, 50 epochs on ``10^4`` samples."""
    base = RunConfig(S=2, d=1, T=1.25, h=0.25, delta=0.0, lr=1e-2, batch_size=64, epochs=50,
                     n_k=10_000, width=32, depth=2, p0=SMOKE_P0)
    return base.replace(**changes) if changes else base


def smoke_p0() -> DistTable:
    return DistTable.product(np.array([[0.7, 0.3]]))


def sweep_config(**changes) -> RunConfig:
    """Reference sweep setting on ``S=3, d=2`` with ``T=5, h=0.25``."""
    base = RunConfig(S=3, d=2, T=5.0, h=0.25, delta=0.0, lr=0.02, batch_size=100, epochs=10,
                     n_k=100, width=32, depth=2, p0=SWEEP_P0)
    return base.replace(**changes) if changes else base


def sweep_p0() -> DistTable:
    return DistTable.product(SWEEP_MARGINALS)
