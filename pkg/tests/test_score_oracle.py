import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsdiff.exceptions import FullSupportError
from dsdiff.score_oracle import (ScoreTable, check_score_bound, ratio_targets, reverse_generator,
                                 score_bound, smoothed_empirical, true_score)
from dsdiff.state_process import (DistTable, StateSpace, forward_marginal, global_rate,
                                  stationary, token_kernel)
from dsdiff.verify import _reciprocal_values, score_movement


def table(p, S=2, d=1):
    return DistTable(np.asarray(p, dtype=float), StateSpace(S, d))


def random_full_support(rng, S, d, floor=1e-3):
    space = StateSpace(S, d)
    return DistTable.from_unnormalized(rng.dirichlet(np.ones(space.size)) + floor, space)


class TestTrueScore:
    def test_long_time_all_ones(self):
        p0 = random_full_support(np.random.default_rng(0), 3, 2)
        np.testing.assert_allclose(true_score(p0, 50.0).values, 1.0, atol=1e-8)

    def test_direct_ratio_at_zero(self):
        s = true_score(table([0.75, 0.25]), 0.0).values
        assert s[0, 0, 0] == pytest.approx(1 / 3)
        assert s[1, 0, 0] == pytest.approx(3.0)

    def test_near_delta_ln2(self):
        s = true_score(table([0.999, 0.001]), math.log(2)).values
        assert s[0, 0, 0] == pytest.approx(0.2505 / 0.7495, rel=1e-12)
        assert s[0, 0, 0] == pytest.approx(0.33422, abs=5e-6)

    def test_matches_bruteforce_definition(self):
        """Entry (x, i, a) is q_t(x with x_i := a) / q_t(x), built state by state."""
        p0 = random_full_support(np.random.default_rng(1), 3, 2)
        t = 0.3
        q = forward_marginal(p0, t).probs
        space = p0.space
        s = true_score(p0, t).values
        for idx in range(space.size):
            x = space.state_of(idx)
            for i in range(space.d):
                alts = [a for a in range(space.S) if a != x[i]]
                for m, a in enumerate(alts):
                    y = x.copy()
                    y[i] = a
                    assert s[idx, i, m] == pytest.approx(q[space.index_of(y)] / q[idx], rel=1e-13)

    def test_full_support_required(self):
        with pytest.raises(FullSupportError):
            true_score(table([1.0, 0.0]), 0.0)

    @given(seed=st.integers(0, 2 ** 16), t=st.floats(0.0, 5.0))
    @settings(max_examples=40, deadline=None)
    def test_reciprocity(self, seed, t):
        p0 = random_full_support(np.random.default_rng(seed), 3, 2)
        s = true_score(p0, t)
        np.testing.assert_allclose(s.values * _reciprocal_values(s), 1.0, atol=1e-9)


class TestRatioTargets:
    @given(t=st.floats(0.01, 10), S=st.integers(2, 6))
    @settings(max_examples=30, deadline=None)
    def test_unchanged_token(self, t, S):
        r = ratio_targets(np.array([0]), np.array([0]), t, S)
        off = (1 - math.exp(-t)) / S
        np.testing.assert_allclose(r, off / (off + math.exp(-t)), rtol=1e-12)

    def test_ln2_example(self):
        r = ratio_targets(np.array([0]), np.array([0]), math.log(2), 2)
        assert r[0, 0] == pytest.approx(1 / 3)

    def test_long_time(self):
        r = ratio_targets(np.array([0, 2]), np.array([1, 1]), 50.0, 3)
        np.testing.assert_allclose(r, 1.0, atol=1e-12)

    def test_rejects_zero_time(self):
        with pytest.raises(ValueError):
            ratio_targets(np.array([0]), np.array([1]), 0.0, 2)

    def test_kernel_formula(self):
        """r(j, a) = P_t[x0_j, a] / P_t[x0_j, xt_j] slot by slot."""
        S, t = 4, 0.37
        P = token_kernel(t, S)
        x0 = np.array([0, 3, 2])
        xt = np.array([1, 3, 0])
        r = ratio_targets(x0, xt, t, S)
        for j in range(3):
            alts = [a for a in range(S) if a != xt[j]]
            np.testing.assert_allclose(r[j], [P[x0[j], a] / P[x0[j], xt[j]] for a in alts])

    def test_batched_shape(self):
        rng = np.random.default_rng(0)
        x0 = rng.integers(0, 3, size=(7, 2))
        xt = rng.integers(0, 3, size=(7, 2))
        assert ratio_targets(x0, xt, 0.5, 3).shape == (7, 2, 2)

    def test_conditional_mean_is_true_score(self):
        """E[r | x_t] equals the true score: the denoising identity behind the loss."""
        p0 = random_full_support(np.random.default_rng(2), 3, 2)
        space, t = p0.space, 0.6
        q_t = forward_marginal(p0, t).probs
        P = token_kernel(t, 3)
        joint = np.array([[p0.probs[a] * np.prod(P[space.state_of(a), space.state_of(b)])
                           for b in range(space.size)] for a in range(space.size)])
        s = true_score(p0, t).values
        for b in range(space.size):
            post = joint[:, b] / q_t[b]
            xt = space.state_of(b)
            mean_r = sum(post[a] * ratio_targets(space.state_of(a), xt, t, 3)
                         for a in range(space.size))
            np.testing.assert_allclose(mean_r, s[b], rtol=1e-10)


class TestScoreBound:
    def test_uniform(self):
        rep = score_bound(stationary(StateSpace(3, 2)))
        assert rep.B == 1 and rep.C == 1.5
        np.testing.assert_allclose(rep.kappa_i, 1.0)

    def test_two_point(self):
        rep = score_bound(table([0.8, 0.2]))
        assert rep.B == pytest.approx(4.0)
        assert rep.kappa_i[0] == pytest.approx(4.0)
        assert rep.C == pytest.approx(6.0)

    def test_identical_marginals(self):
        m = np.array([0.6, 0.3, 0.1])
        p0 = DistTable.product(np.tile(m, (3, 1)))
        rep = score_bound(p0)
        assert rep.kappa_sq == pytest.approx(3 * rep.kappa_i[0] ** 2)
        assert rep.C == 1.5 * rep.B

    def test_zero_entry(self):
        with pytest.raises(FullSupportError):
            score_bound(table([1.0, 0.0]))

    @given(seed=st.integers(0, 2 ** 16))
    @settings(max_examples=25, deadline=None)
    def test_bound_holds_at_all_times(self, seed):
        rng = np.random.default_rng(seed)
        p0 = random_full_support(rng, int(rng.integers(2, 5)), int(rng.integers(1, 4)))
        B = score_bound(p0).B
        for t in np.geomspace(1e-3, 50, 20):
            assert check_score_bound(true_score(p0, t), B).passed

    def test_injected_violation_located(self):
        space = StateSpace(3, 2)
        vals = np.ones((9, 2, 2))
        vals[5, 1, 0] = 4.0
        chk = check_score_bound(ScoreTable(vals, space), 2.0)
        assert not chk.passed and chk.n_violations == 1
        x, i, a, v = chk.worst
        assert (x, i, v) == (5, 1, 4.0)
        # state 5 = (1, 2); slot 0 of coordinate 1 skips symbol 2 -> symbol 0
        assert a == 0

    def test_uniform_scores_pass_b1(self):
        assert check_score_bound(ScoreTable(np.ones((4, 2, 1)), StateSpace(2, 2)), 1.0).passed

    def test_smoothed_empirical_finite(self):
        space = StateSpace(3, 2)
        data = np.zeros((20, 2), dtype=int)  # only one state ever observed
        p = smoothed_empirical(data, space, alpha=1.0)
        assert np.all(p.probs > 0)
        assert np.isfinite(score_bound(p).B)


class TestReverseGenerator:
    def test_rows_sum_to_zero(self):
        p0 = random_full_support(np.random.default_rng(3), 3, 2)
        Q = reverse_generator(true_score(p0, 0.4))
        np.testing.assert_allclose(Q.sum(axis=1), 0.0, atol=1e-10)

    def test_uniform_scores_give_forward_generator(self):
        space = StateSpace(3, 2)
        Q = reverse_generator(ScoreTable(np.ones((9, 2, 2)), space))
        np.testing.assert_allclose(Q, global_rate(space), atol=1e-15)

    def test_single_entry(self):
        Q = reverse_generator(ScoreTable(np.array([[[1 / 3]], [[3.0]]]), StateSpace(2, 1)))
        assert Q[0, 1] == pytest.approx(1 / 6)
        assert Q[1, 0] == pytest.approx(1.5)

    def test_detailed_balance(self):
        p0 = random_full_support(np.random.default_rng(4), 3, 2)
        t = 0.8
        q = forward_marginal(p0, t).probs
        Qr = reverse_generator(true_score(p0, t))
        Qf = global_rate(p0.space)
        off = ~np.eye(9, dtype=bool)
        np.testing.assert_allclose((q[:, None] * Qr)[off], (q[:, None] * Qf).T[off], atol=1e-10)

    def test_sparse_matches_dense(self):
        p0 = random_full_support(np.random.default_rng(5), 2, 3)
        s = true_score(p0, 0.2)
        np.testing.assert_allclose(reverse_generator(s, dense=False).toarray(), reverse_generator(s))


class TestScoreTableIO:
    def test_csv_roundtrip(self, tmp_path):
        space = StateSpace(3, 2)
        s = true_score(random_full_support(np.random.default_rng(6), 3, 2), 0.1)
        s.to_csv(tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == "state,coord,symbol,value"
        np.testing.assert_array_equal(ScoreTable.from_csv(tmp_path / "s.csv", space).values, s.values)

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            ScoreTable(np.ones((4, 1, 1)), StateSpace(3, 2))


def test_score_movement_is_first_order():
    p0 = random_full_support(np.random.default_rng(7), 3, 2, floor=0.02)
    hs = np.array([0.4, 0.2, 0.1, 0.05])
    slope = np.polyfit(np.log(hs), np.log([score_movement(p0, h) for h in hs]), 1)[0]
    assert 0.8 <= slope <= 1.2
