import itertools
import math

import numpy as np
import pytest
from scipy import stats

from qgnoise.analysis import (
    AnalysisError,
    Category,
    ResponseSummary,
    betainc_regularized,
    build_cohort_report,
    classify,
    delta_r2,
    dose_response,
    pearson,
    permutation_test,
    r2_score,
    summarize_seed,
    t_sf_two_sided,
    threshold_analysis,
    welch_t_test,
)
from qgnoise.training import RunRecord


def record(seed, eps, r2):
    return RunRecord(init_seed=seed, epsilon=eps, r2_train=r2, r2_val=r2, r2_test=r2,
                     epochs_run=10, early_stopped=False, wall_time=1.0)


class TestR2:
    def test_perfect(self):
        assert r2_score([1, 2, 3], [1, 2, 3]) == 1.0

    def test_mean_predictor(self):
        assert r2_score([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == 0.0

    def test_hand_value(self):
        assert r2_score([1, 2, 3], [1, 2, 4]) == pytest.approx(0.5, abs=0)

    def test_constant_truth_rejected(self):
        with pytest.raises(AnalysisError):
            r2_score([2, 2, 2], [1, 2, 3])

    def test_never_above_one(self, rng):
        for _ in range(50):
            y = rng.normal(size=10)
            pred = rng.normal(size=10)
            assert r2_score(y, pred) <= 1.0

    def test_one_iff_exact(self, rng):
        y = rng.normal(size=8)
        assert r2_score(y, y) == 1.0
        assert r2_score(y, y + 1e-6) < 1.0


class TestDeltaAndClassify:
    def test_zero_change(self):
        assert delta_r2(0.70, 0.70) == 0.0

    def test_positive(self):
        assert delta_r2(0.73, 0.70) == pytest.approx(4.285714285714286, abs=1e-12)

    def test_negative(self):
        assert delta_r2(0.63, 0.70) == pytest.approx(-10.0, abs=1e-12)

    def test_nonpositive_baseline(self):
        with pytest.raises(AnalysisError):
            delta_r2(0.5, 0.0)
        with pytest.raises(AnalysisError):
            delta_r2(0.5, -0.1)

    @pytest.mark.parametrize("value,expected", [
        (2.5, Category.BENEFICIAL),
        (-2.5, Category.DETRIMENTAL),
        (2.0, Category.MARGINAL),
        (-2.0, Category.MARGINAL),
        (0.0, Category.MARGINAL),
        (2.0000001, Category.BENEFICIAL),
    ])
    def test_thresholds(self, value, expected):
        assert classify(value) is expected

    def test_composition_consistency(self, rng):
        for _ in range(300):
            noisy = float(rng.uniform(0.01, 1.0))
            base = float(rng.uniform(0.01, 1.0))
            d = delta_r2(noisy, base)
            cat = classify(d)
            if d > 2.0:
                assert cat is Category.BENEFICIAL
            elif d < -2.0:
                assert cat is Category.DETRIMENTAL
            else:
                assert cat is Category.MARGINAL


class TestSummarize:
    def test_beneficial_case(self):
        records = [record(7, e, r) for e, r in
                   [(0.0, 0.70), (0.005, 0.73), (0.010, 0.71), (0.015, 0.69)]]
        s = summarize_seed(records)
        assert s.best_epsilon == 0.005
        assert s.best_noisy_r2 == 0.73
        assert s.delta_r2_percent == pytest.approx(4.285714285714286, abs=1e-12)
        assert s.category is Category.BENEFICIAL

    def test_all_equal_is_marginal(self):
        records = [record(1, e, 0.7) for e in (0.0, 0.005, 0.010, 0.015)]
        s = summarize_seed(records)
        assert s.delta_r2_percent == 0.0
        assert s.category is Category.MARGINAL
        assert s.best_epsilon == 0.005  # smallest nonzero wins the tie

    def test_detrimental_case(self):
        records = [record(2, e, r) for e, r in
                   [(0.0, 0.72), (0.005, 0.66), (0.010, 0.65), (0.015, 0.64)]]
        s = summarize_seed(records)
        assert s.delta_r2_percent == pytest.approx(-8.333333333333332, abs=1e-12)
        assert s.category is Category.DETRIMENTAL
        assert s.best_epsilon == 0.0  # baseline dominates every noisy run

    def test_missing_zero(self):
        with pytest.raises(AnalysisError):
            summarize_seed([record(1, 0.005, 0.7), record(1, 0.01, 0.7)])

    def test_duplicate_epsilon(self):
        with pytest.raises(AnalysisError):
            summarize_seed([record(1, 0.0, 0.7), record(1, 0.005, 0.7), record(1, 0.005, 0.71)])

    def test_mixed_seeds(self):
        with pytest.raises(AnalysisError):
            summarize_seed([record(1, 0.0, 0.7), record(2, 0.005, 0.7)])


class TestPearson:
    def test_perfect_positive(self):
        x = [1.0, 2.0, 3.0, 4.0]
        r, p = pearson(x, [2 * v for v in x])
        assert r == pytest.approx(1.0, abs=1e-12)
        assert p == pytest.approx(0.0, abs=1e-12)

    def test_perfect_negative(self):
        x = [1.0, 2.0, 3.0, 4.0]
        r, _ = pearson(x, [-v for v in x])
        assert r == pytest.approx(-1.0, abs=1e-12)

    def test_hand_value(self):
        r, p = pearson([1, 2, 3, 4], [2, 1, 4, 3])
        assert r == pytest.approx(0.6, abs=1e-12)
        assert p == pytest.approx(0.4, abs=1e-12)  # scipy.stats.pearsonr oracle

    def test_against_scipy(self, rng):
        for _ in range(20):
            x = rng.normal(size=12)
            y = rng.normal(size=12)
            r, p = pearson(x, y)
            r_ref, p_ref = stats.pearsonr(x, y)
            assert r == pytest.approx(r_ref, abs=1e-12)
            assert p == pytest.approx(p_ref, rel=1e-9, abs=1e-12)

    def test_affine_invariance(self, rng):
        x = rng.normal(size=10)
        y = rng.normal(size=10)
        r, _ = pearson(x, y)
        r_pos, _ = pearson(3.0 * x + 1.0, y)
        r_neg, _ = pearson(-2.0 * x + 0.5, y)
        assert r_pos == pytest.approx(r, abs=1e-12)
        assert r_neg == pytest.approx(-r, abs=1e-12)

    def test_degenerate_variance(self):
        with pytest.raises(AnalysisError):
            pearson([1, 1, 1], [1, 2, 3])


class TestWelch:
    def test_identical_samples(self):
        assert welch_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == (0.0, 1.0)

    def test_identical_constant_samples(self):
        assert welch_t_test([1.0, 1.0], [1.0, 1.0]) == (0.0, 1.0)

    def test_separated_groups(self):
        a = [0.0, 0.001, -0.001, 0.0005]
        b = [1.0, 1.001, 0.999, 1.0005]
        _, p = welch_t_test(a, b)
        assert p < 0.01

    def test_frozen_fixture(self):
        # cross-checked against scipy.stats.ttest_ind(equal_var=False)
        a = [0.712, 0.695, 0.701, 0.688, 0.705]
        b = [0.661, 0.674, 0.652, 0.680, 0.659]
        t, p = welch_t_test(a, b)
        assert t == pytest.approx(5.320156627716697, rel=1e-12)
        assert p == pytest.approx(0.0008271039242775465, rel=1e-9)

    def test_against_scipy(self, rng):
        for _ in range(20):
            a = rng.normal(size=int(rng.integers(3, 9)))
            b = rng.normal(loc=0.3, size=int(rng.integers(3, 9)))
            t, p = welch_t_test(a, b)
            ref = stats.ttest_ind(a, b, equal_var=False)
            assert t == pytest.approx(float(ref.statistic), rel=1e-10)
            assert p == pytest.approx(float(ref.pvalue), rel=1e-9, abs=1e-12)

    def test_small_groups_rejected(self):
        with pytest.raises(AnalysisError):
            welch_t_test([1.0], [1.0, 2.0])


class TestTDistribution:
    def test_betainc_against_scipy(self, rng):
        from scipy.special import betainc
        for _ in range(40):
            a = float(rng.uniform(0.2, 8.0))
            b = float(rng.uniform(0.2, 8.0))
            x = float(rng.uniform(0.0, 1.0))
            assert betainc_regularized(a, b, x) == pytest.approx(betainc(a, b, x), rel=1e-10, abs=1e-13)

    def test_t_sf_against_scipy(self):
        for t in (0.0, 0.5, 1.3, 2.7, -1.9, 6.0):
            for df in (1, 2, 5, 17.3, 50):
                assert t_sf_two_sided(t, df) == pytest.approx(
                    2 * stats.t.sf(abs(t), df), rel=1e-10, abs=1e-14)


def _enumerated_p(per_seed, eps_grid):
    """Brute-force oracle: enumerate every within-seed slot assignment."""
    zero = eps_grid.index(0.0)
    m = len(eps_grid)

    def seed_delta(values):
        base = values[zero]
        best = max(v for k, v in enumerate(values) if k != zero)
        return (best - base) / base * 100.0

    rows = [[per_seed[s][e] for e in eps_grid] for s in sorted(per_seed)]
    observed = max(seed_delta(r) for r in rows) - min(seed_delta(r) for r in rows)
    hits = total = 0
    for orders in itertools.product(itertools.permutations(range(m)), repeat=len(rows)):
        deltas = [seed_delta([row[k] for k in order]) for row, order in zip(rows, orders)]
        total += 1
        hits += (max(deltas) - min(deltas)) >= observed
    return hits / total


class TestPermutation:
    def test_identical_values_give_p_one(self):
        per_seed = {s: {e: 0.7 for e in (0.0, 0.005, 0.01, 0.015)} for s in (1, 2, 3)}
        assert permutation_test(per_seed, n_perm=200, seed=0) == 1.0

    def test_two_seeds_two_levels_exhaustive(self):
        per_seed = {1: {0.0: 0.70, 0.005: 0.75}, 2: {0.0: 0.72, 0.005: 0.69}}
        p = permutation_test(per_seed, n_perm=1000, seed=0)
        assert p == _enumerated_p(per_seed, [0.0, 0.005])

    def test_three_seeds_full_grid_exhaustive(self):
        per_seed = {
            1: {0.0: 0.70, 0.005: 0.73, 0.01: 0.71, 0.015: 0.69},
            2: {0.0: 0.72, 0.005: 0.66, 0.01: 0.65, 0.015: 0.64},
            3: {0.0: 0.68, 0.005: 0.69, 0.01: 0.70, 0.015: 0.66},
        }
        p = permutation_test(per_seed, n_perm=20000, seed=0)
        assert p == _enumerated_p(per_seed, [0.0, 0.005, 0.01, 0.015])

    def test_sampled_p_in_unit_interval(self, rng):
        per_seed = {
            s: {e: float(rng.uniform(0.5, 0.9)) for e in (0.0, 0.005, 0.01, 0.015)}
            for s in range(6)
        }
        p = permutation_test(per_seed, n_perm=199, seed=3, exhaustive=False)
        assert 0.0 < p <= 1.0

    def test_requires_enough_seeds(self):
        with pytest.raises(AnalysisError):
            permutation_test({1: {0.0: 0.7, 0.005: 0.7}}, n_perm=100)

    def test_mismatched_grids_rejected(self):
        with pytest.raises(AnalysisError):
            permutation_test({1: {0.0: 0.7, 0.005: 0.7}, 2: {0.0: 0.7, 0.01: 0.7}}, n_perm=100)


def summary(seed, baseline, delta, category, best_eps=0.005):
    return ResponseSummary(init_seed=seed, baseline_r2=baseline, best_epsilon=best_eps,
                           best_noisy_r2=baseline * (1 + delta / 100), delta_r2_percent=delta,
                           category=category)


class TestThreshold:
    def test_all_below_all_beneficial(self):
        summaries = [summary(s, 0.6, 5.0, Category.BENEFICIAL) for s in range(4)]
        assert threshold_analysis(summaries, 0.71) == (1.0, None)

    def test_hand_counted_mixture(self):
        summaries = [
            summary(0, 0.65, 5.0, Category.BENEFICIAL),
            summary(1, 0.66, 0.0, Category.MARGINAL),
            summary(2, 0.75, -4.0, Category.DETRIMENTAL),
            summary(3, 0.80, 1.0, Category.MARGINAL),
        ]
        p_benefit, p_degrade = threshold_analysis(summaries, 0.71)
        assert p_benefit == pytest.approx(0.5)
        assert p_degrade == pytest.approx(0.5)

    def test_empty_input(self):
        with pytest.raises(AnalysisError):
            threshold_analysis([], 0.71)


class TestDoseResponse:
    def test_single_seed_curve(self):
        summaries = [summary(1, 0.70, 4.285714285714286, Category.BENEFICIAL)]
        per_seed = {1: {0.0: 0.70, 0.005: 0.73, 0.01: 0.71, 0.015: 0.69}}
        curves = dose_response(summaries, per_seed)
        expected = {0.005: delta_r2(0.73, 0.70), 0.01: delta_r2(0.71, 0.70),
                    0.015: delta_r2(0.69, 0.70)}
        assert curves[Category.BENEFICIAL] == pytest.approx(expected)
        assert curves[Category.DETRIMENTAL] == {}

    def test_two_seed_mean(self):
        summaries = [
            summary(1, 0.70, 4.0, Category.BENEFICIAL),
            summary(2, 0.70, 6.0, Category.BENEFICIAL),
        ]
        per_seed = {
            1: {0.0: 0.70, 0.005: 0.70 * 1.04},
            2: {0.0: 0.70, 0.005: 0.70 * 1.06},
        }
        curves = dose_response(summaries, per_seed)
        assert curves[Category.BENEFICIAL][0.005] == pytest.approx(5.0, abs=1e-9)


class TestCohortReport:
    def test_small_cohort(self):
        eps = (0.0, 0.005, 0.010, 0.015)
        rows = {
            1: [0.70, 0.73, 0.71, 0.69],   # beneficial, best 0.005
            2: [0.72, 0.66, 0.65, 0.64],   # detrimental
            3: [0.68, 0.683, 0.687, 0.66], # marginal, best 0.010
            4: [0.60, 0.66, 0.62, 0.61],   # beneficial (10%)
        }
        per_seed = {s: [record(s, e, r) for e, r in zip(eps, values)]
                    for s, values in rows.items()}
        report = build_cohort_report(per_seed, threshold=0.71, n_perm=500, perm_seed=1)
        fr = report.category_fractions
        assert fr["beneficial"] == 0.5
        assert fr["detrimental"] == 0.25
        assert fr["marginal"] == 0.25
        assert sum(fr.values()) == pytest.approx(1.0, abs=1e-12)
        assert report.optimal_epsilon_histogram[0.005] == pytest.approx(0.5)
        assert report.any_degradation_fraction == 0.25
        assert 0.0 < report.permutation_p <= 1.0
        assert report.welch_t is None  # only one detrimental seed: no group test
        assert report.p_benefit_below == pytest.approx(2 / 3)
        assert report.p_degrade_above == pytest.approx(1.0)

    def test_every_seed_in_exactly_one_category(self):
        eps = (0.0, 0.005)
        per_seed = {
            s: [record(s, 0.0, 0.6 + 0.01 * s), record(s, 0.005, 0.6 + 0.012 * s)]
            for s in range(1, 6)
        }
        report = build_cohort_report(per_seed, n_perm=200)
        assert len(report.summaries) == 5
        total = sum(
            sum(s.category is c for s in report.summaries) for c in Category
        )
        assert total == 5
