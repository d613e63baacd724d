import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import multivariate_normal, norm

from mmst import _mc
from mmst._mc import _fallback
from mmst.analysis import (
    JENSEN_GRID,
    AggregationModel,
    Aggregator,
    MonteCarloEstimate,
    SubsetRule,
    VerdictMatrix,
    bivariate_equal_max_mean,
    correlation_sweep,
    expected_aggregate,
    jensen_gap,
    phi_correlation,
    two_method_model,
)
from mmst.core import CandidateSolution, MethodKind, Verdict


def matrix_from_rows(rows) -> VerdictMatrix:
    return VerdictMatrix(
        methods=(MethodKind.TEXT, MethodKind.CODE), rows=np.asarray(rows, dtype=np.int8)
    )


def expand_counts(n11, n10, n01, n00):
    rows = [(1, 1)] * n11 + [(1, 0)] * n10 + [(0, 1)] * n01 + [(0, 0)] * n00
    return matrix_from_rows(rows)


class TestPhiCorrelation:
    def test_perfect_agreement(self):
        assert phi_correlation(matrix_from_rows([(1, 1), (1, 1), (0, 0), (0, 0)])) == 1.0

    def test_perfect_disagreement(self):
        assert phi_correlation(matrix_from_rows([(1, 0), (0, 1), (1, 0), (0, 1)])) == -1.0

    def test_contingency_fixture(self):
        # (10*2 - 5*3) / sqrt(15*5*13*7) = 5 / sqrt(6825)
        value = phi_correlation(expand_counts(10, 5, 3, 2))
        assert value == 5.0 / math.sqrt(6825)

    def test_matches_pearson_on_expanded_vectors(self):
        matrix = expand_counts(17, 4, 9, 30)
        phi = phi_correlation(matrix)
        pearson = np.corrcoef(matrix.rows[:, 0], matrix.rows[:, 1])[0, 1]
        assert phi == pytest.approx(pearson, abs=1e-12)

    def test_positives_subset_drops_double_negatives(self):
        matrix = expand_counts(5, 5, 5, 100)
        all_phi = phi_correlation(matrix, SubsetRule.ALL)
        pos_phi = phi_correlation(matrix, SubsetRule.AT_LEAST_ONE_POSITIVE)
        # on the positives subset n00 = 0, so phi <= 0
        assert pos_phi < 0 < all_phi

    def test_constant_column_is_undefined_not_zero(self):
        assert phi_correlation(matrix_from_rows([(1, 1), (1, 0)])) is None

    def test_too_few_rows_undefined(self):
        assert phi_correlation(matrix_from_rows([(1, 0)])) is None
        assert (
            phi_correlation(matrix_from_rows([(1, 1), (0, 0)]), SubsetRule.AT_LEAST_ONE_POSITIVE)
            is None
        )

    def test_from_candidates_any_correct_over_k(self):
        def candidate(example, method, index, verdict, answer=None):
            return CandidateSolution(example, method, "", "a", answer, verdict, index)

        candidates = [
            candidate("e1", MethodKind.TEXT, 0, Verdict.INCORRECT, 0.0),
            candidate("e1", MethodKind.TEXT, 1, Verdict.CORRECT, 1.0),
            candidate("e1", MethodKind.CODE, 0, Verdict.EXECUTION_ERROR),
            candidate("e2", MethodKind.TEXT, 0, Verdict.INCORRECT, 9.0),
            candidate("e2", MethodKind.CODE, 0, Verdict.CORRECT, 1.0),
        ]
        matrix = VerdictMatrix.from_candidates(candidates, (MethodKind.TEXT, MethodKind.CODE))
        assert matrix.rows.tolist() == [[1, 0], [0, 1]]


class TestAggregationModel:
    def test_non_psd_rejected(self):
        with pytest.raises(ValueError, match="positive semidefinite"):
            AggregationModel(
                means=(0, 0, 0),
                stds=(1, 1, 1),
                correlation=((1, 0.9, -0.9), (0.9, 1, 0.9), (-0.9, 0.9, 1)),
            )

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            AggregationModel(means=(0, 0), stds=(1, 1), correlation=((1, 0.2), (0.3, 1)))

    def test_weights_must_be_simplex(self):
        with pytest.raises(ValueError, match="weights"):
            two_method_model(aggregator=Aggregator.WEIGHTED_QUADRATIC_MEAN, weights=(0.7, 0.7))

    def test_boundary_correlation_factorable(self):
        for rho in (-1.0, 1.0):
            L = two_method_model(rho=rho).factor()
            cov = L @ L.T
            assert cov == pytest.approx(np.array([[1, rho], [rho, 1]]), abs=1e-12)

    def test_aggregate_of_means(self):
        assert two_method_model(mu=2.0).aggregate_of_means() == 2.0
        model = AggregationModel(
            means=(3.0, 4.0),
            stds=(1.0, 1.0),
            correlation=((1.0, 0.0), (0.0, 1.0)),
            aggregator=Aggregator.WEIGHTED_QUADRATIC_MEAN,
            weights=(0.5, 0.5),
        )
        assert model.aggregate_of_means() == pytest.approx(math.sqrt((9 + 16) / 2))


def quadrature_emax(rho: float) -> float:
    """Independent oracle for E[max(X1, X2)], standard marginals."""
    if rho == 1.0:
        return 0.0
    if rho == -1.0:
        f = lambda z: max(z, -z) * norm.pdf(z)
        return integrate.quad(f, -12, 12)[0]
    rv = multivariate_normal([0.0, 0.0], [[1.0, rho], [rho, 1.0]])
    f = lambda y, x: max(x, y) * rv.pdf([x, y])
    return integrate.dblquad(f, -8, 8, -8, 8, epsabs=1e-9)[0]


class TestExpectedAggregate:
    def test_closed_form_verified_by_quadrature(self):
        for rho in (-1.0, -0.5, 0.0, 0.5, 1.0):
            assert bivariate_equal_max_mean(0.0, 1.0, rho) == pytest.approx(
                quadrature_emax(rho), abs=1e-6
            )

    def test_monte_carlo_matches_closed_form(self):
        for rho in (-1.0, -0.5, 0.0, 0.5, 1.0):
            estimate = expected_aggregate(two_method_model(rho=rho), 200_000, seed=42)
            expected = bivariate_equal_max_mean(0.0, 1.0, rho)
            band = max(4 * estimate.std_error, 1e-12)
            assert abs(estimate.estimate - expected) <= band, rho

    def test_specific_reference_values(self):
        # rho=0 -> 1/sqrt(pi) = 0.5642..., rho=-1 -> sqrt(2/pi) = 0.7979...
        assert bivariate_equal_max_mean(0, 1, 0.0) == pytest.approx(0.5642, abs=5e-5)
        assert bivariate_equal_max_mean(0, 1, -1.0) == pytest.approx(0.7979, abs=5e-5)

    def test_nonzero_mean_and_scale(self):
        estimate = expected_aggregate(two_method_model(mu=2.0, sigma=3.0, rho=-0.5), 300_000, seed=7)
        expected = bivariate_equal_max_mean(2.0, 3.0, -0.5)
        assert abs(estimate.estimate - expected) <= 4 * estimate.std_error

    def test_minimum_draws_enforced(self):
        with pytest.raises(ValueError):
            expected_aggregate(two_method_model(), 9_999, seed=0)

    def test_same_seed_same_estimate_any_worker_count(self):
        model = two_method_model(rho=-0.25)
        single = expected_aggregate(model, 150_000, seed=5, workers=1)
        pooled = expected_aggregate(model, 150_000, seed=5, workers=7)
        assert single == pooled

    def test_monotone_nonincreasing_in_rho(self):
        estimates = [
            expected_aggregate(two_method_model(rho=rho), 400_000, seed=11).estimate
            for rho in (-1.0, -0.5, 0.0, 0.5, 1.0)
        ]
        assert all(a >= b - 1e-3 for a, b in zip(estimates, estimates[1:]))


class TestJensenGap:
    def test_gap_zero_for_comonotone_equal_marginals(self):
        result = jensen_gap(two_method_model(rho=1.0), 50_000, seed=3)
        assert abs(result.gap) <= 3 * max(result.std_error, 1e-12)

    def test_wqm_gap_matches_quadrature(self):
        # E[sqrt((X1^2+X2^2)/2)] = sqrt(pi)/2 for independent standard normals
        model = two_method_model(
            rho=0.0, aggregator=Aggregator.WEIGHTED_QUADRATIC_MEAN, weights=(0.5, 0.5)
        )
        result = jensen_gap(model, 400_000, seed=17)
        assert result.aggregate_of_means == 0.0
        assert result.gap == pytest.approx(math.sqrt(math.pi) / 2, abs=4 * result.std_error)

    def test_nonnegative_across_grid(self):
        assert len(JENSEN_GRID) == 10
        for index, model in enumerate(JENSEN_GRID):
            result = jensen_gap(model, 50_000, seed=100 + index)
            assert result.gap >= -3 * result.std_error, index

    def test_anticorrelation_widens_the_gap(self):
        low = jensen_gap(two_method_model(rho=0.5), 200_000, seed=9)
        high = jensen_gap(two_method_model(rho=-0.5), 200_000, seed=9)
        assert high.gap > low.gap


class TestBackends:
    def test_backends_bit_identical(self):
        model = two_method_model(rho=-0.5)
        mu = np.ascontiguousarray(model.means, dtype=np.float64)
        L = np.ascontiguousarray(model.factor())
        weights = np.array([0.5, 0.5])
        for aggregator in (_mc.AGG_MAX, _mc.AGG_WEIGHTED_QUADRATIC_MEAN):
            python_values = _fallback.block_aggregates(
                np.random.Philox(key=77).jumped(3), mu, L, aggregator, weights, 20_000
            )
            selected = _mc.block_aggregates(
                np.random.Philox(key=77).jumped(3), mu, L, aggregator, weights, 20_000
            )
            assert np.array_equal(python_values, selected)

    @pytest.mark.skipif("compiled" not in _mc.available_backends(), reason="kernel not built")
    def test_compiled_kernel_equals_fallback(self):
        from mmst._mc import _kernel

        model = two_method_model(rho=0.3)
        mu = np.ascontiguousarray(model.means, dtype=np.float64)
        L = np.ascontiguousarray(model.factor())
        weights = np.array([0.25, 0.75])
        for aggregator in (_mc.AGG_MAX, _mc.AGG_WEIGHTED_QUADRATIC_MEAN):
            a = _kernel.block_aggregates(np.random.Philox(key=5), mu, L, aggregator, weights, 30_000)
            b = _fallback.block_aggregates(np.random.Philox(key=5), mu, L, aggregator, weights, 30_000)
            assert np.array_equal(a, b)

    def test_env_override_selects_backend(self, monkeypatch):
        monkeypatch.setenv("MMST_MC_BACKEND", "python")
        assert _mc.backend_name() == "python"
        monkeypatch.setenv("MMST_MC_BACKEND", "bogus")
        with pytest.raises(RuntimeError):
            _mc.backend_name()

    def test_estimates_equal_across_backends(self, monkeypatch):
        model = two_method_model(rho=-0.5)
        monkeypatch.setenv("MMST_MC_BACKEND", "python")
        python_estimate = expected_aggregate(model, 50_000, seed=4)
        monkeypatch.delenv("MMST_MC_BACKEND")
        default_estimate = expected_aggregate(model, 50_000, seed=4)
        assert python_estimate == default_estimate


class TestCorrelationSweep:
    def test_comonotone_union_equals_single_coverage(self):
        row = correlation_sweep(0.5, 0.5, [1.0], 4_000, 1, seed=2)[0]
        assert row.union_coverage == pytest.approx(
            row.single_sizes["text"] / 4_000, abs=1e-12
        )

    def test_countermonotone_union_is_total(self):
        row = correlation_sweep(0.5, 0.5, [-1.0], 4_000, 1, seed=2)[0]
        assert row.union_coverage == 1.0

    def test_independent_union_075(self):
        row = correlation_sweep(0.5, 0.5, [0.0], 10_000, 1, seed=2)[0]
        sigma = math.sqrt(0.75 * 0.25 / 10_000)
        assert abs(row.union_coverage - 0.75) <= 3 * sigma

    def test_union_coverage_monotone_in_negative_rho(self):
        rows = correlation_sweep(0.5, 0.5, [-1.0, -0.5, 0.0, 0.5, 1.0], 20_000, 1, seed=6)
        coverages = [row.union_coverage for row in rows]
        assert all(a >= b - 0.02 for a, b in zip(coverages, coverages[1:]))

    def test_sign_flip_pattern_for_nonpositive_rho(self):
        rows = correlation_sweep(0.55, 0.6, [-0.75, -0.5, -0.25, 0.0], 100_000, 1, seed=8)
        for row in rows:
            assert row.phi_all > row.phi_positives, row.rho

    def test_phi_converges_to_implied_bernoulli(self):
        rows = correlation_sweep(0.5, 0.5, [-0.5], 100_000, 1, seed=10)
        row = rows[0]
        sigma3 = 3.0 / math.sqrt(100_000)
        assert abs(row.phi_all - row.implied_bernoulli) <= sigma3

    def test_infeasible_rho_marked_not_raised(self):
        rows = correlation_sweep(0.5, 0.5, [2.0, 0.0], 1_000, 1, seed=1)
        assert not rows[0].feasible
        assert rows[0].infeasible_reason
        assert rows[1].feasible

    def test_mmst_size_is_sum_of_single_sizes(self):
        row = correlation_sweep(0.4, 0.7, [0.2], 5_000, 2, seed=3)[0]
        total = row.single_sizes["text"] + row.single_sizes["code"]
        assert row.mmst_sizes == {"text": total, "code": total}
