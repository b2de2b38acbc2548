import math

import numpy as np
import pytest

from dsdiff import presets
from dsdiff.bregman import expected_minibatch_loss
from dsdiff.exceptions import TrainingAborted
from dsdiff.sampler import tabulate
from dsdiff.state_process import DistTable, StateSpace, stationary
from dsdiff.trainer import RunConfig, draw_dataset, resolve_C, train
from dsdiff.verify import paired_descent


def small_config(**changes):
    base = dict(S=2, d=1, T=0.75, h=0.25, lr=1e-2, batch_size=16, epochs=2, n_k=40, width=8,
                depth=2)
    base.update(changes)
    return RunConfig(**base)


def small_data(n=40, seed=0):
    return draw_dataset(presets.smoke_p0(), n, np.random.default_rng(seed))


class TestRunConfig:
    def test_derives_K(self):
        assert RunConfig(T=5.0, h=0.25).K == 20
        assert RunConfig(T=1.25, h=0.25, delta=0.25).K == 4

    def test_inconsistent_K(self):
        with pytest.raises(ValueError):
            RunConfig(T=1.0, h=0.25, K=3)

    @pytest.mark.parametrize("bad", [dict(h=0.0), dict(delta=-1.0), dict(lr=0.0),
                                     dict(n_k=10, batch_size=20), dict(epochs=-1)])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            RunConfig(**bad)

    def test_replace_recomputes_K(self):
        cfg = RunConfig(T=5.0, h=0.25)
        assert cfg.replace(h=0.5).K == 10
        assert cfg.replace(lr=0.1).K == 20

    def test_t_query(self):
        assert RunConfig(T=1.0, h=0.25, delta=0.0).t_query(0) == 0.25


class TestResolveC:
    def test_uniform(self):
        assert resolve_C(stationary(StateSpace(3, 2))) == (1.0, 1.5)

    def test_two_point(self):
        B, C = resolve_C(DistTable(np.array([0.8, 0.2]), StateSpace(2, 1)))
        assert B == pytest.approx(4.0) and C == pytest.approx(6.0)

    def test_dataset_with_unseen_states(self):
        data = np.zeros((10, 2), dtype=int)
        B, C = resolve_C(data, StateSpace(3, 2), alpha=1.0)
        # ten counts plus 1/9 pseudo-count on (0, 0) against 1/9 on its neighbours
        assert B == pytest.approx(91.0) and C == pytest.approx(136.5)

    def test_dataset_needs_space(self):
        with pytest.raises(ValueError):
            resolve_C(np.zeros((3, 1), dtype=int))


class TestDrawDataset:
    def test_shape_and_determinism(self):
        p0 = presets.sweep_p0()
        a = draw_dataset(p0, 500, np.random.default_rng(4))
        b = draw_dataset(p0, 500, np.random.default_rng(4))
        assert a.shape == (500, 2)
        np.testing.assert_array_equal(a, b)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            draw_dataset(presets.smoke_p0(), 0, np.random.default_rng(0))


class TestTrain:
    def test_zero_epochs_returns_initial_nets(self):
        cfg = small_config(epochs=0)
        nets, log = train(small_data(), cfg, 3.0)
        again, _ = train(small_data(), cfg.replace(epochs=2), 3.0)
        assert len(nets) == cfg.K and len(log) == 0
        assert not np.array_equal(nets[0].mlp.flat_params(), again[0].mlp.flat_params())
        fresh, _ = train(small_data(), cfg, 3.0)
        np.testing.assert_array_equal(nets[1].mlp.flat_params(), fresh[1].mlp.flat_params())

    def test_log_length(self):
        cfg = small_config(epochs=3, n_k=40, batch_size=16)
        _, log = train(small_data(), cfg, 3.0)
        per = 3 * math.ceil(40 / 16)
        assert len(log) == per * cfg.K
        np.testing.assert_array_equal(log.updates_per_k(), per)
        assert len(log.epoch_rows()) == 3 * cfg.K

    def test_times_in_interval(self):
        cfg = small_config(delta=0.1, T=0.85)
        _, log = train(small_data(), cfg, 3.0)
        t, k = np.array(log.t), np.array(log.k)
        assert np.all(t > k * cfg.h + cfg.delta) and np.all(t <= (k + 1) * cfg.h + cfg.delta)

    def test_records_weight_size(self):
        nets, log = train(small_data(), small_config(), 3.0)
        assert log.max_abs_param == [float(np.abs(n.mlp.flat_params()).max()) for n in nets]

    def test_bitwise_deterministic(self):
        cfg = small_config()
        a, la = train(small_data(), cfg, 3.0)
        b, lb = train(small_data(), cfg, 3.0)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.mlp.flat_params(), y.mlp.flat_params())
        assert la.loss == lb.loss

    def test_seed_changes_result(self):
        a, _ = train(small_data(), small_config(seed_train=0), 3.0)
        b, _ = train(small_data(), small_config(seed_train=1), 3.0)
        assert not np.array_equal(a[0].mlp.flat_params(), b[0].mlp.flat_params())

    def test_frozen_pass_leaves_params(self):
        cfg = small_config()
        nets, _ = train(small_data(), cfg.replace(epochs=0), 3.0)
        before = [n.mlp.flat_params() for n in nets]
        _, log = train(small_data(), cfg, 3.0, nets=nets, update=False)
        assert len(log) > 0
        for n, p in zip(nets, before):
            np.testing.assert_array_equal(n.mlp.flat_params(), p)

    def test_rejects_invalid_states(self):
        with pytest.raises(Exception):
            train(np.full((40, 1), 5), small_config(), 3.0)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts(self):
        cfg = small_config(lr=1e6, epochs=20)
        with pytest.raises(TrainingAborted):
            train(small_data(), cfg, 3.0)


def test_frozen_loss_matches_expected_minibatch_loss():
    """Mean loss of a fixed net over many minibatches against the quadrature value."""
    p0 = presets.smoke_p0()
    cfg = small_config(T=0.5, epochs=0, n_k=2000, batch_size=2000)
    nets, _ = train(draw_dataset(p0, 2000, np.random.default_rng(0)), cfg, 3.0)
    data = draw_dataset(p0, 200_000, np.random.default_rng(1))
    _, log = train(data, cfg.replace(epochs=100, n_k=200_000, batch_size=2000), 3.0, nets=nets,
                   update=False)
    for k in range(cfg.K):
        want = expected_minibatch_loss(p0, tabulate(nets[k], p0.space, clipped=False), k, cfg.h)
        got = log.loss_curve(k).mean()
        assert got == pytest.approx(want, abs=5e-3)


def test_training_lowers_loss_on_smoke_config():
    cfg = presets.smoke_config(epochs=10, n_k=2000)
    p0 = presets.smoke_p0()
    data = draw_dataset(p0, cfg.n_k, np.random.default_rng(0))
    before, after = paired_descent(cfg, data, resolve_C(p0)[1])
    assert np.mean(after < before) >= 0.8
