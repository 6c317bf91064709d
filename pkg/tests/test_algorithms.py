from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from corrbandit.core.algorithms.bounds import (
    BoundParams,
    correlation_tail_bound,
    mse_concentration_bound,
    sr_error_bound,
    stddev_tail_bound,
    theoretical_error_bounds,
    uniform_error_bound,
    variance_tail_bound,
)
from corrbandit.core.algorithms.schedule import active_pair_count, c_of_k, phase_schedule
from corrbandit.core.algorithms.successive_rejects import successive_rejects, worst_arms
from corrbandit.core.algorithms.uniform import uniform_plan, uniform_sampling
from corrbandit.core.environment.builders import build_experiment_cov
from corrbandit.core.environment.sampler import Environment
from corrbandit.errors import BudgetTooSmallError, NonPositiveGapError, TooFewArmsError, UnknownIdError


# -------------------------
# phase schedule
# -------------------------
class TestPhaseSchedule:
    def test_c_of_k(self):
        assert c_of_k(3) == Fraction(3, 2)
        assert c_of_k(4) == Fraction(17, 6)
        assert c_of_k(5) == Fraction(53, 12)

    def test_active_pair_count(self):
        assert [active_pair_count(5, k) for k in (1, 2, 3)] == [10, 9, 7]

    def test_three_arms(self):
        s = phase_schedule(3, 100)
        assert s.lengths == (22,)
        assert s.c_of_k == 1.5
        assert s.total_pulls == 66

    def test_four_arms(self):
        s = phase_schedule(4, 1000)
        assert s.lengths == (88, 117)
        assert s.increments == (88, 29)
        assert s.active_sizes == (6, 5)
        assert s.total_pulls == 673

    def test_five_arms(self):
        s = phase_schedule(5, 1000)
        assert s.lengths == (45, 57, 75)
        assert s.total_pulls == 684
        assert s.phases == 3

    def test_budget_must_exceed_pair_count(self):
        with pytest.raises(BudgetTooSmallError):
            phase_schedule(5, 10)
        assert phase_schedule(5, 11).lengths[0] >= 1

    def test_too_few_arms(self):
        with pytest.raises(TooFewArmsError):
            phase_schedule(2, 100)

    def test_never_exceeds_budget(self):
        for K in range(3, 13):
            P = math.comb(K, 2)
            for n in range(P + 1, P + 300):
                s = phase_schedule(K, n)
                assert s.total_pulls <= n
                assert all(d >= 0 for d in s.increments)
                assert s.lengths[0] >= 1


# -------------------------
# uniform sampling
# -------------------------
class TestUniform:
    def test_exact_division(self):
        assert list(uniform_plan(3, 9).values()) == [3, 3, 3]

    def test_remainder_in_lexicographic_order(self):
        plan = uniform_plan(3, 10)
        assert plan == {(0, 1): 4, (0, 2): 3, (1, 2): 3}

    def test_budget_too_small(self):
        with pytest.raises(BudgetTooSmallError):
            uniform_plan(4, 5)

    def test_scripted_run_recommends_best(self, lb5, scripted):
        sampler = scripted(lb5)
        res = uniform_sampling(sampler, 1000)
        assert res.recommended == 0
        assert res.correct
        assert res.seed is None
        assert res.total_pulls == 1000
        assert set(res.pulls.values()) == {100}
        np.testing.assert_allclose(res.mse_hat, [3.0, 3.5625, 3.65625, 3.66796875, 3.66796875])

    def test_real_environment(self, lb5):
        res = uniform_sampling(Environment(lb5, seed=1), 1003)
        assert res.total_pulls == 1003
        assert res.pulls[(0, 1)] == 101 and res.pulls[(3, 4)] == 100
        assert res.seed == 1
        assert 0 <= res.recommended < 5


# -------------------------
# successive rejects
# -------------------------
class TestSuccessiveRejects:
    def test_worst_arms_tie_break(self):
        values = np.array([1.0, 3.0, 3.0, 2.0])
        assert worst_arms(values, [0, 1, 2, 3], 1) == [2]
        assert worst_arms(values, [0, 1, 3], 2) == [1, 3]

    def test_scripted_trace(self, lb5, scripted):
        res = successive_rejects(scripted(lb5), 1000)
        trace = res.phase_trace
        assert [p.phase for p in trace] == [1, 2, 3]
        assert set(trace[0].eliminated) == {3, 4}
        assert trace[0].removed_pairs == ((3, 4),)
        assert trace[1].eliminated == (2,)
        assert trace[1].removed_pairs == ((2, 3), (2, 4))
        assert trace[2].eliminated == (1,)
        assert trace[2].removed_pairs == ((1, 2), (1, 3), (1, 4))
        assert [p.active_pairs for p in trace] == [10, 9, 7]
        assert [p.increment for p in trace] == [45, 12, 18]
        assert [p.cumulative_count for p in trace] == [45, 57, 75]
        assert res.recommended == 0 and res.correct

    def test_scripted_pull_counts(self, lb5, scripted):
        res = successive_rejects(scripted(lb5), 1000)
        assert res.total_pulls == 684
        assert res.pulls[(3, 4)] == 45
        assert res.pulls[(2, 3)] == res.pulls[(2, 4)] == 57
        for pair in [(0, 1), (0, 2), (1, 2), (0, 3), (0, 4), (1, 3), (1, 4)]:
            assert res.pulls[pair] == 75

    def test_trace_to_dict_is_one_based(self, lb5, scripted):
        d = successive_rejects(scripted(lb5), 1000).to_json()
        assert d["recommended"] == 1
        assert d["phase_trace"][1]["eliminated"] == [3]
        assert d["phase_trace"][0]["removed_pairs"] == [[4, 5]]
        assert d["pulls"]["(4,5)"] == 45

    def test_real_environment_invariants(self):
        model = build_experiment_cov(3)
        budget = 20_000
        res = successive_rejects(Environment(model, seed=12), budget)
        schedule = phase_schedule(model.K, budget)
        assert res.total_pulls == schedule.total_pulls <= budget
        assert [len(p.eliminated) for p in res.phase_trace] == [2] + [1] * (model.K - 3)
        eliminated = [a for p in res.phase_trace for a in p.eliminated]
        assert sorted(eliminated + [res.recommended]) == list(range(model.K))
        for (i, j), count in res.pulls.items():
            if res.recommended in (i, j):
                assert count == schedule.lengths[-1]
            assert count in schedule.lengths

    def test_deterministic(self, lb5):
        a = successive_rejects(Environment(lb5, seed=5), 500)
        b = successive_rejects(Environment(lb5, seed=5), 500)
        assert a.recommended == b.recommended
        assert a.pulls == b.pulls
        np.testing.assert_array_equal(a.mse_hat, b.mse_hat)

    def test_budget_too_small(self, lb5):
        with pytest.raises(BudgetTooSmallError):
            successive_rejects(Environment(lb5, seed=0), 10)

    def test_csv_row(self, lb5, scripted):
        row = successive_rejects(scripted(lb5), 1000).to_csv_row(model="lb:5:0.5", replication=3)
        assert row == {
            "model": "lb:5:0.5",
            "algorithm": "sr",
            "replication": 3,
            "seed": "",
            "K": 5,
            "n": 1000,
            "recommended": 1,
            "correct": 1,
            "total_pulls": 684,
        }


# -------------------------
# error bounds
# -------------------------
class TestBounds:
    def test_capped_at_one(self):
        assert uniform_error_bound(0, 5, 1.0, 0.5) == 1.0
        assert sr_error_bound(10, 5, 1.0, 3.0) == 1.0
        assert mse_concentration_bound(1, 35, 1.0, 0.5) == 1.0

    def test_decreasing_in_n(self):
        ns = [2e10, 3e10, 4e10]
        vals = [uniform_error_bound(n, 3, 1.0, 1.0) for n in ns]
        assert vals[0] > vals[1] > vals[2]
        vals = [sr_error_bound(n, 3, 1.0, 3.0) for n in ns]
        assert vals[0] > vals[1] > vals[2]

    def test_uniform_formula(self):
        n, K, l, gap, c = 2e10, 3, 1.0, 1.0, 1_119_744.0
        expect = 84 * K * K * math.exp(-n * l * l * gap * gap / (c * K ** 7))
        assert uniform_error_bound(n, K, l, gap) == pytest.approx(expect, rel=1e-12)

    def test_sr_formula(self):
        n, K, l, h2, c = 1e12, 4, 0.5, 2.0, 1_119_744.0
        expect = 84 * K ** 3 * math.exp(-(l * l / (c * K ** 5)) * (n - 6) / ((17 / 6) * h2))
        assert sr_error_bound(n, K, l, h2) == pytest.approx(expect, rel=1e-12)

    def test_prefactor_override(self):
        a = mse_concentration_bound(1e10, 3, 1.0, 1.0)
        b = mse_concentration_bound(1e10, 3, 1.0, 1.0, prefactor=42.0)
        assert b == pytest.approx(3 * a)

    def test_non_positive_gap(self):
        with pytest.raises(NonPositiveGapError):
            uniform_error_bound(100, 5, 1.0, 0.0)
        with pytest.raises(NonPositiveGapError):
            sr_error_bound(100, 5, 1.0, math.inf)
        with pytest.raises(NonPositiveGapError):
            mse_concentration_bound(100, 5, 1.0, 0.0)

    def test_dispatch(self, lb5):
        params = BoundParams.from_model(lb5, 1e12, eps=0.5)
        assert params.gap == pytest.approx(0.5625)
        assert theoretical_error_bounds("uniform", params) == uniform_error_bound(1e12, 5, 1.0, 0.5625)
        assert theoretical_error_bounds("sr", params) == sr_error_bound(1e12, 5, 1.0, params.h2)
        assert theoretical_error_bounds("mse_conc", params.with_n(1e13)) == mse_concentration_bound(1e13, 5, 1.0, 0.5)
        with pytest.raises(UnknownIdError):
            theoretical_error_bounds("ucb", params)

    def test_single_statistic_tails(self):
        assert variance_tail_bound(8, 1.0, 1.0) == pytest.approx(2 * math.exp(-1.0))
        assert stddev_tail_bound(8, 1.0, 1.0) == pytest.approx(2 * math.exp(-1.0))
        assert correlation_tail_bound(1, 0.1, 1.0) == 1.0
        # l*eps/3 = 1, so the rate is 1/(36(1+eta))
        assert correlation_tail_bound(5760, 3.0, 1.0, eta=3.0) == pytest.approx(26 * math.exp(-5.0))
