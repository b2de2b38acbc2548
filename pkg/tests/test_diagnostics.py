import math

import numpy as np
import pytest

from dsdiff import presets
from dsdiff.diagnostics import (ErrorTerms, discretization_gap, error_terms, error_terms_for_nets,
                                fit_slope, hardness_pair, kl, kl_monotonicity, read_sweep_csv,
                                run_cell, sweep, truncation_error, write_error_terms_csv,
                                write_sweep_csv, SweepRow)
from dsdiff.sampler import constant_table
from dsdiff.score_net import interpolating_score_net
from dsdiff.score_oracle import ScoreTable, true_score
from dsdiff.state_process import DistTable, StateSpace, stationary
from dsdiff.verify import loglog_slope, random_error_case

S2 = StateSpace(2, 1)


def two_point(p):
    return DistTable(np.array([1 - p, p]), S2)


class TestKL:
    def test_examples(self):
        assert kl(two_point(0.0), two_point(0.5)) == pytest.approx(math.log(2))
        assert kl(two_point(0.25), two_point(0.5)) == pytest.approx(0.130812, abs=1e-6)

    def test_support_violation(self):
        assert kl(two_point(0.5), two_point(0.0)) == math.inf

    def test_self_is_zero(self):
        p = presets.sweep_p0()
        assert kl(p, p) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            kl(two_point(0.5), stationary(StateSpace(2, 2)))


class TestErrorTerms:
    def test_exact_raw_scores(self):
        p0 = presets.sweep_p0()
        t = 0.5
        s = true_score(p0, t)
        et = error_terms(p0, s, 3.75, t)
        assert et.A == pytest.approx(0.0, abs=1e-20)
        assert et.B == 0.0 and et.C == pytest.approx(0.0, abs=1e-20)
        assert et.violations() == []

    def test_perturbed_raw_scores(self):
        """Raw scores pushed outside the box: clipping must only help."""
        p0 = presets.sweep_p0()
        t = 0.25
        s = true_score(p0, t).values
        raw = ScoreTable(s * np.exp(np.random.default_rng(0).normal(scale=1.5, size=s.shape)),
                         p0.space)
        et = error_terms(p0, raw, 3.75, t)
        assert et.C > 0 and et.A < et.B
        assert et.violations() == []

    def test_random_cases_hold(self):
        rng = np.random.default_rng(1)
        space = StateSpace(3, 2)
        for _ in range(30):
            assert error_terms(*random_error_case(rng, space)).violations() == []

    def test_violation_report(self):
        assert ErrorTerms(A=10.0, B=1.0, C=2.0).violations() == ["A <= 2B + 2C", "C <= B",
                                                                 "A <= 4B"]

    def test_for_nets_uses_query_times(self):
        p0 = presets.sweep_p0()
        h = 0.5
        nets = [interpolating_score_net(true_score(p0, (k + 1) * h).values, 3, 2, C=3.75,
                                        rng=np.random.default_rng(k)) for k in range(2)]
        for et in error_terms_for_nets(p0, nets, h):
            assert et.B < 1e-12

    def test_csv(self, tmp_path):
        write_error_terms_csv([ErrorTerms(0.1, 0.2, 0.05)], tmp_path / "e.csv")
        lines = (tmp_path / "e.csv").read_text().splitlines()
        assert lines == ["k,A_k,B_k,C_k", "0,0.1,0.2,0.05"]


class TestTruncation:
    def test_delta_example(self):
        val, bound = truncation_error(two_point(0.0), 1.0)
        q = (1 + math.exp(-1)) / 2
        assert val == pytest.approx(q * math.log(2 * q) + (1 - q) * math.log(2 * (1 - q)), rel=1e-12)
        assert val == pytest.approx(0.0692831, abs=1e-7)
        assert bound == pytest.approx(math.exp(-1) * math.log(2), rel=1e-15)
        assert val <= bound

    def test_bound_holds(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            space = StateSpace(int(rng.integers(2, 5)), int(rng.integers(1, 4)))
            p0 = DistTable(rng.dirichlet(np.ones(space.size)), space)
            val, bound = truncation_error(p0, float(rng.uniform(0, 8)))
            assert val <= bound + 1e-15

    def test_stationary_start(self):
        assert truncation_error(stationary(StateSpace(3, 2)), 0.3)[0] == pytest.approx(0, abs=1e-15)


class TestDiscretization:
    def test_gap_below_bound(self):
        p0 = presets.sweep_p0()
        K, h = 8, 0.25
        gap, bound, CT, DT = discretization_gap(p0, [constant_table(1.2, p0.space)] * K, K, h)
        assert 0 <= gap <= bound and CT > 0 and DT > 0

    def test_gap_shrinks_linearly_in_h(self):
        p0 = presets.sweep_p0()
        T = 1.0
        hs = np.array([0.25, 0.125, 0.0625])
        gaps = []
        for h in hs:
            K = int(round(T / h))
            gaps.append(discretization_gap(p0, [constant_table(1.2, p0.space)] * K, K, h)[0])
        assert abs(loglog_slope(hs, gaps) - 1.0) <= 0.25

    def test_bound_formula(self):
        p0 = presets.sweep_p0()
        _, bound, _, _ = discretization_gap(p0, [constant_table(1.0, p0.space)] * 2, 2, 0.5, C=3.75)
        lam = 2 * 2 / 3
        assert bound == pytest.approx(2 * 2 * 3.75 * lam * 1.0 * 0.5 / 3)


class TestHardness:
    def test_small_eps(self):
        kl_val, h2, lower = hardness_pair(1e-4)
        assert kl_val / 1e-4 == pytest.approx(20.7811, rel=2e-3)
        assert h2 > lower

    def test_closed_forms(self):
        eps = 0.01
        p = np.array([1 - eps, eps])
        q = np.array([1 - 25 * eps, 25 * eps])
        kl_val, h2, _ = hardness_pair(eps)
        assert kl_val == pytest.approx(np.sum(p * np.log(p / q)))
        assert h2 == pytest.approx(1 - np.sum(np.sqrt(p * q)))

    @pytest.mark.parametrize("eps", [0.0, 0.04, -1e-3])
    def test_range(self, eps):
        with pytest.raises(ValueError):
            hardness_pair(eps)


class TestSweep:
    @staticmethod
    def tiny():
        return presets.sweep_config(T=0.5, epochs=1, width=8)

    def test_cell_deterministic_except_wall_time(self):
        cfg, p = self.tiny(), presets.sweep_p0()
        a = run_cell(cfg, p, 100, 0)
        b = run_cell(cfg, p, 100, 0)
        assert (a.mean_score_err, a.kl, a.per_k_err) == (b.mean_score_err, b.kl, b.per_k_err)
        assert len(a.per_k_err) == cfg.K

    def test_singleton_grid(self):
        rows, fit = sweep(self.tiny(), presets.sweep_p0(), [100], [0])
        assert len(rows) == 1 and math.isnan(fit.slope)
        assert math.isnan(kl_monotonicity(rows))

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            sweep(self.tiny(), presets.sweep_p0(), [], [0])

    def test_fit_slope_exact_power_law(self):
        rows = [SweepRow(n, 0, 3.0 * n ** -0.5, 0.0, 0.0) for n in (10, 100, 1000)]
        fit = fit_slope(rows)
        assert fit.slope == pytest.approx(-0.5) and fit.stderr == pytest.approx(0.0, abs=1e-12)

    def test_monotonicity(self):
        rows = [SweepRow(n, s, 1.0, 1.0 / n + s * 1e-6, 0.0) for n in (10, 100, 1000) for s in (0, 1)]
        assert kl_monotonicity(rows) == pytest.approx(-1.0)

    def test_csv_roundtrip(self, tmp_path):
        rows = [SweepRow(100, 0, 0.25, 0.01, 12.5), SweepRow(1000, 1, 0.125, 0.005, 20.0)]
        write_sweep_csv(rows, tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == "n_k,seed,mean_score_err,kl,wall_ms"
        assert read_sweep_csv(tmp_path / "s.csv") == rows
