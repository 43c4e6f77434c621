import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from epr_cascade.distinguisher import CountDistribution, binomial_distribution
from epr_cascade.stats import (
    EmpiricalDistribution,
    chi_square_gof,
    chi_square_sf,
    empirical_distribution,
    log_likelihood_ratio,
    regularized_gamma_q,
    second_level_summary,
    total_variation,
    wilson_interval,
)

B_LOW = binomial_distribution(5, 0.2)
B_HIGH = binomial_distribution(5, 0.8)
DIAG = CountDistribution(5, [0.164, 0.208, 0.128, 0.128, 0.208, 0.164])


def distributions(k):
    return st.lists(st.floats(0.001, 1.0), min_size=k + 1, max_size=k + 1).map(
        lambda w: CountDistribution(k, np.array(w) / sum(w))
    )


class TestEmpirical:
    def test_tally(self):
        emp = empirical_distribution([1, 1, 4], 5)
        assert emp.counts.tolist() == [0, 2, 0, 0, 1, 0]
        assert emp.total == 3

    def test_errors(self):
        with pytest.raises(ValueError):
            empirical_distribution([0], 0)
        with pytest.raises(ValueError):
            empirical_distribution([], 5)
        with pytest.raises(ValueError):
            empirical_distribution([6], 5)
        with pytest.raises(ValueError):
            EmpiricalDistribution(2, [1, 1, 1], 4)

    def test_binomial_samples_converge(self):
        rng = np.random.default_rng(31)
        tvs = []
        for n in (10**3, 10**4, 10**5):
            emp = empirical_distribution(rng.binomial(5, 0.2, size=n), 5)
            tvs.append(total_variation(emp.normalized(), B_LOW))
        assert tvs[-1] <= 0.01
        assert tvs[0] > tvs[1] > tvs[2]


class TestTotalVariation:
    def test_identity_and_known_value(self):
        assert total_variation(B_LOW, B_LOW) == 0
        # 0.5 * sum |pmf(5, 1/5) - pmf(5, 4/5)| enumerated by hand
        manual = 0.5 * sum(
            abs(math.comb(5, c) * (0.2**c * 0.8 ** (5 - c) - 0.8**c * 0.2 ** (5 - c))) for c in range(6)
        )
        assert manual == pytest.approx(0.88416, abs=1e-15)
        assert total_variation(B_LOW, B_HIGH) == pytest.approx(0.88416, abs=1e-12)

    def test_mismatched_rounds(self):
        with pytest.raises(ValueError):
            total_variation(B_LOW, binomial_distribution(4, 0.2))

    @given(distributions(5), distributions(5), distributions(5))
    @settings(max_examples=100, deadline=None)
    def test_metric_axioms(self, p, q, r):
        pq = total_variation(p, q)
        assert pq == pytest.approx(total_variation(q, p), abs=1e-15)
        assert 0 <= pq <= 1
        assert total_variation(p, r) <= pq + total_variation(q, r) + 1e-12
        assert total_variation(p, p) == 0


class TestIncompleteGamma:
    @pytest.mark.parametrize("a", [0.5, 1.0, 1.5, 2.0, 2.5, 4.0, 10.0, 60.0])
    def test_against_scipy(self, a):
        xs = np.concatenate([np.linspace(1e-6, 3 * a + 30, 400), [a - 0.5, a + 0.999, a + 1.0, a + 1.001]])
        for x in xs:
            if x <= 0:
                continue
            assert abs(regularized_gamma_q(a, x) - special.gammaincc(a, x)) <= 1e-10

    def test_exponential_case(self):
        # Q(1, x) = exp(-x)
        for x in (0.1, 1.0, 7.5, 40.0):
            assert regularized_gamma_q(1.0, x) == pytest.approx(math.exp(-x), rel=1e-12)

    def test_chi_square_tail(self):
        # df = 2: survival function is exp(-x/2)
        assert chi_square_sf(3.0, 2) == pytest.approx(math.exp(-1.5), rel=1e-12)
        assert chi_square_sf(0.0, 3) == 1.0
        assert chi_square_sf(11.070497693516351, 5) == pytest.approx(0.05, abs=1e-10)

    def test_errors(self):
        with pytest.raises(ValueError):
            regularized_gamma_q(0, 1)
        with pytest.raises(ValueError):
            regularized_gamma_q(1, -1)


class TestChiSquare:
    def test_exact_proportions(self):
        emp = EmpiricalDistribution(5, [16384, 20480, 10240, 2560, 320, 16], 50000)
        res = chi_square_gof(emp, B_LOW)
        assert res.statistic == pytest.approx(0.0, abs=1e-12)
        assert res.p_value == 1.0
        assert res.degrees_of_freedom == 5

    def test_pooling_of_sparse_bins(self):
        # 1000 * Bin(5, 1/5): expected [327.68, 409.6, 204.8, 51.2, 6.4, 0.32]; last bin folds into bin 4
        emp = empirical_distribution([0] * 330 + [1] * 410 + [2] * 200 + [3] * 52 + [4] * 7 + [5] * 1, 5)
        res = chi_square_gof(emp, B_LOW)
        assert res.degrees_of_freedom == 4
        obs = np.array([330, 410, 200, 52, 8])
        exp_ = np.array([327.68, 409.6, 204.8, 51.2, 6.72])
        assert res.statistic == pytest.approx(float(((obs - exp_) ** 2 / exp_).sum()), rel=1e-12)

    def test_all_bins_pooled_away(self):
        with pytest.raises(ValueError):
            chi_square_gof(empirical_distribution([0, 1], 5), B_LOW)

    def test_zero_reference_mass_with_counts(self):
        with pytest.raises(ValueError):
            chi_square_gof(empirical_distribution([5] * 10, 5), binomial_distribution(5, 0.0))

    def test_correct_model_not_rejected(self):
        counts = np.random.default_rng(3).binomial(5, 0.2, size=100_000)
        assert chi_square_gof(empirical_distribution(counts, 5), B_LOW).p_value > 0.001

    def test_wrong_model_rejected(self):
        counts = np.random.default_rng(3).binomial(5, 0.2, size=100_000)
        res = chi_square_gof(empirical_distribution(counts, 5), B_HIGH)
        assert res.p_value < 1e-6
        # statistic far beyond the 1e-6 critical value for its df
        assert res.statistic > special.chdtri(res.degrees_of_freedom, 1e-6)

    def test_matches_scipy_chisquare(self):
        from scipy.stats import chisquare

        counts = np.random.default_rng(5).binomial(5, 0.5, size=4000)
        emp = empirical_distribution(counts, 5)
        ref = binomial_distribution(5, 0.5)
        res = chi_square_gof(emp, ref)
        want = chisquare(emp.counts, emp.total * ref.mass)
        assert res.statistic == pytest.approx(want.statistic, rel=1e-12)
        assert res.p_value == pytest.approx(want.pvalue, abs=1e-10)

    @given(st.permutations(range(6)), st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_permutation_invariance(self, perm, seed):
        ref = binomial_distribution(5, 0.5)
        counts = np.random.default_rng(seed).multinomial(2000, ref.mass)
        emp = EmpiricalDistribution(5, counts, 2000)
        perm = list(perm)
        emp_p = EmpiricalDistribution(5, counts[perm], 2000)
        ref_p = CountDistribution(5, ref.mass[perm])
        a, b = chi_square_gof(emp, ref), chi_square_gof(emp_p, ref_p)
        assert a.statistic == pytest.approx(b.statistic, rel=1e-12, abs=1e-12)
        assert a.degrees_of_freedom == b.degrees_of_freedom


class TestLogLikelihoodRatio:
    def test_identical_references(self):
        assert log_likelihood_ratio([0, 1, 2, 5], DIAG, DIAG) == 0.0

    def test_ratio_of_64(self):
        assert log_likelihood_ratio([1, 1, 1], B_LOW, B_HIGH) == pytest.approx(3 * math.log(64), rel=1e-12)

    def test_zero_mass(self):
        with pytest.raises(ValueError):
            log_likelihood_ratio([3], B_LOW, binomial_distribution(5, 0.0))

    @given(st.lists(st.integers(0, 5), min_size=1, max_size=30), st.lists(st.integers(0, 5), min_size=1, max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_additive(self, xs, ys):
        whole = log_likelihood_ratio(xs + ys, B_LOW, DIAG)
        parts = log_likelihood_ratio(xs, B_LOW, DIAG) + log_likelihood_ratio(ys, B_LOW, DIAG)
        assert whole == pytest.approx(parts, abs=1e-9)

    def test_positive_on_average_under_numerator(self):
        rng = np.random.default_rng(12)
        vals = [log_likelihood_ratio(rng.binomial(5, 0.2, size=10), B_LOW, DIAG) for _ in range(1000)]
        assert np.mean(vals) > 0


class TestSecondLevelSummary:
    def test_point_mass(self):
        s = second_level_summary(empirical_distribution([1] * 20, 5))
        assert s.mode_set == {1}
        assert s.mass_at_1_and_4 == 1.0
        assert s.mass_elsewhere == 0.0
        assert s.sample_variance == 0.0

    def test_uniform(self):
        s = second_level_summary(empirical_distribution(list(range(6)) * 100, 5))
        assert s.mass_at_1_and_4 == pytest.approx(1 / 3)
        assert s.mode_set == set(range(6))
        assert s.sample_variance == pytest.approx(np.var(list(range(6)) * 100, ddof=1))

    def test_diagonal_ensemble_concentrates_on_one_and_four(self):
        rng = np.random.default_rng(2)
        counts = rng.choice(6, size=100_000, p=DIAG.mass)
        s = second_level_summary(empirical_distribution(counts, 5))
        assert s.mass_at_1_and_4 == pytest.approx(0.416, abs=0.006)
        assert s.mass_at_1_and_4 + s.mass_elsewhere == pytest.approx(1.0, abs=1e-9)


def test_wilson_interval():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert (lo, hi) == pytest.approx((0.40383153, 0.59616847), abs=1e-6)
    with pytest.raises(ValueError):
        wilson_interval(3, 2)
