import math

import numpy as np
import pytest

import metrics
from data import Dataset, LabelSet, QueryGroup, SyntheticSpec, generate_synthetic
from errors import DegenerateFitError, InputError, RiskUndefinedError
from losses import LossKind, ScoringMode
from risk_lab import (BoundedRandomScorer, OracleScorer, RiskKind, ScorerFamily, affinity_analysis,
                      build_scorer_family, counterexample_check, dcg_affinity_check, debias_risk, deviation_bound,
                      empirical_risk, expected_excess_bound, expected_noisy_risk, noisy_excess_threshold,
                      parse_objective, predicted_dcg_intercept)


class FixedScorer:
    def __init__(self, by_query):
        self.by_query = by_query

    def scores(self, query):
        return np.asarray(self.by_query[query.query_id], dtype=float)


class LabelScorer:
    def scores(self, query):
        return 2.0 * query.labels - 1.0


class ZeroScorer:
    def scores(self, query):
        return np.zeros(query.size)


def one_query(labels):
    return Dataset((QueryGroup("q", np.zeros((len(labels), 1)), np.array(labels)),), feature_dim=1)


def test_perfect_pointwise_scorer_has_zero_risk(tiny_ds):
    estimate = empirical_risk(LabelScorer(), tiny_ds, "zero_one", ScoringMode.pointwise)
    assert estimate.value == 0.0
    assert estimate.kind is RiskKind.pointwise_clean
    assert estimate.n_terms == tiny_ds.num_documents


def test_pairwise_zero_one_on_a_single_pair():
    scorer = FixedScorer({"q": [0.9, 0.1]})
    assert empirical_risk(scorer, one_query([1, 0]), "zero_one", ScoringMode.pairwise).value == 0.0
    flipped = empirical_risk(scorer, one_query([0, 1]), "zero_one", ScoringMode.pairwise)
    assert flipped.value == 1.0 and flipped.n_terms == 1


def test_zero_scorer_symmetrized_logistic_is_one_half(separable_ds):
    for mode in ScoringMode:
        assert empirical_risk(ZeroScorer(), separable_ds, "symmetrized_logistic", mode).value == 0.5


def test_pairwise_risk_needs_a_mixed_query():
    with pytest.raises(RiskUndefinedError):
        empirical_risk(ZeroScorer(), one_query([1, 1]), "logistic", ScoringMode.pairwise)


def test_pairwise_zero_one_is_one_minus_auc():
    rng = np.random.default_rng(21)
    for _ in range(50):
        labels = np.array([1, 0] + list(rng.integers(0, 2, 6)))
        scores = rng.standard_normal(labels.size)
        risk = empirical_risk(FixedScorer({"q": scores}), one_query(labels), "zero_one", ScoringMode.pairwise)
        auc = metrics.auc(metrics.RankedQuery(scores, labels))
        assert risk.value == pytest.approx(1.0 + auc, abs=1e-12)


def test_noisy_kind_uses_noisy_labels(tiny_ds):
    flipped = tiny_ds.with_queries([
        QueryGroup(q.query_id, q.features, q.labels, noisy_labels=1 - q.labels) for q in tiny_ds.queries
    ])
    estimate = empirical_risk(LabelScorer(), flipped, "zero_one", ScoringMode.pointwise, LabelSet.noisy)
    assert estimate.kind is RiskKind.pointwise_noisy
    assert estimate.value == 1.0


@pytest.mark.parametrize("loss, constant", [("zero_one", 1.0), ("symmetrized_logistic", 1.0)])
@pytest.mark.parametrize("gamma", [0.9, 0.7, 0.51])
def test_expected_noisy_risk_is_affine_in_clean_risk(pool_ds, loss, constant, gamma):
    for scale in (1.0, 10.0):
        scorer = OracleScorer(pool_ds, scale=scale)
        clean = empirical_risk(scorer, pool_ds, loss, ScoringMode.pointwise).value
        noisy = expected_noisy_risk(scorer, pool_ds, loss, gamma)
        assert noisy == pytest.approx((2 * gamma - 1) * clean + constant * (1 - gamma), abs=1e-12)
        assert debias_risk(noisy, gamma, constant) == pytest.approx(clean, abs=1e-10)


def test_logistic_expected_noisy_risk_is_not_affine(pool_ds):
    gamma = 0.9
    gaps = []
    for scale in (1.0, 10.0):
        scorer = OracleScorer(pool_ds, scale=scale)
        clean = empirical_risk(scorer, pool_ds, "logistic", ScoringMode.pointwise).value
        gaps.append(expected_noisy_risk(scorer, pool_ds, "logistic", gamma) - (2 * gamma - 1) * clean)
    assert abs(gaps[0] - gaps[1]) > 0.1


def test_scorer_family_shape(pool_ds):
    spec = ScorerFamily()
    family = build_scorer_family(spec, pool_ds)
    assert len(family) == 100
    assert sum(m.scale == 10.0 for m in family) == 50
    assert family[0].perturbation == 0.0
    assert all(a.perturbation < b.perturbation for a, b in zip(family, family[1:]))


def test_unperturbed_scorers_match_the_oracle(pool_ds):
    family = build_scorer_family(ScorerFamily(size=4, max_perturbation=0.0), pool_ds)
    oracle = OracleScorer(pool_ds)
    query = pool_ds.queries[3]
    np.testing.assert_allclose(family[0].scores(query), oracle.scores(query))
    np.testing.assert_array_equal(metrics.ranking_order(family[1].scores(query)),
                                  metrics.ranking_order(oracle.scores(query)))


def test_family_scores_are_fixed_per_scorer_and_document(pool_ds):
    family = build_scorer_family(ScorerFamily(size=10, seed=3), pool_ds)
    query = pool_ds.queries[0]
    np.testing.assert_array_equal(family[7].scores(query), family[7].scores(query))
    assert not np.allclose(family[6].scores(query), family[8].scores(query))


def test_family_needs_an_oracle(pool_ds):
    without_oracle = Dataset(pool_ds.queries, pool_ds.feature_dim)
    with pytest.raises(InputError):
        build_scorer_family(ScorerFamily(), without_oracle)


def test_bounded_random_scorer(pool_ds):
    scorer = BoundedRandomScorer(seed=4)
    values = np.concatenate([scorer.scores(q) for q in pool_ds.queries])
    assert values.min() >= -1.0 and values.max() <= 1.0
    np.testing.assert_array_equal(scorer.scores(pool_ds.queries[0]), scorer.scores(pool_ds.queries[0]))


def test_objective_names():
    ranknet = parse_objective("ranknet")
    assert ranknet.loss.kind is LossKind.logistic and ranknet.mode is ScoringMode.pairwise
    assert parse_objective("symmetrized_ranknet").loss.kind is LossKind.symmetrized_logistic
    assert parse_objective("NDCG@10").is_metric
    assert parse_objective("logistic:pairwise").mode is ScoringMode.pairwise
    assert parse_objective("hinge").mode is ScoringMode.pointwise
    for bad in ["squared", "ndcg", "logistic:listwise"]:
        with pytest.raises(InputError):
            parse_objective(bad)


def small_family():
    return ScorerFamily(size=20, max_perturbation=1.5, seed=5)


def test_no_noise_gives_the_identity_fit(pool_ds):
    report = affinity_analysis(small_family(), pool_ds, "zero_one", gamma=1.0, draws=5, queries_per_draw=20, seed=1)
    assert report.slope == pytest.approx(1.0)
    assert report.intercept == pytest.approx(0.0, abs=1e-12)
    assert report.r_squared == pytest.approx(1.0)
    assert len(report.points) == 20


def test_zero_one_affinity_at_gamma_09(pool_ds):
    report = affinity_analysis(small_family(), pool_ds, "zero_one", gamma=0.9, draws=200, queries_per_draw=50,
                               seed=7, n_jobs=2)
    assert report.predicted_slope == pytest.approx(0.8)
    assert report.predicted_intercept == pytest.approx(0.1)
    assert abs(report.slope - 0.8) <= 4 * report.slope_se
    assert abs(report.intercept - 0.1) <= 4 * report.intercept_se
    assert report.r_squared >= 0.99
    assert report.spearman_rho >= 0.95
    assert not report.low_confidence


def test_symmetric_loss_at_gamma_one_half_has_flat_slope(pool_ds):
    report = affinity_analysis(small_family(), pool_ds, "symmetrized_logistic", gamma=0.5, draws=100,
                               queries_per_draw=50, seed=2)
    assert abs(report.slope) <= 4 * report.slope_se + 1e-3


def test_auc_order_is_preserved(pool_ds):
    family = ScorerFamily(size=10, max_perturbation=2.0, seed=1)
    report = affinity_analysis(family, pool_ds, "auc", gamma=0.9, draws=50, queries_per_draw=50, seed=3)
    assert report.spearman_rho >= 0.95
    assert report.slope > 0


def test_draws_are_reproducible_across_thread_counts(pool_ds):
    serial = affinity_analysis(small_family(), pool_ds, "map", gamma=0.8, draws=6, queries_per_draw=10, seed=4)
    threaded = affinity_analysis(small_family(), pool_ds, "map", gamma=0.8, draws=6, queries_per_draw=10, seed=4,
                                 n_jobs=3)
    assert serial.model_dump() == threaded.model_dump()


def test_single_draw_is_low_confidence(pool_ds):
    report = affinity_analysis(small_family(), pool_ds, "zero_one", gamma=0.9, draws=1, queries_per_draw=10)
    assert report.low_confidence and report.slope_se is None


def test_identical_scorers_cannot_be_fitted(pool_ds):
    family = ScorerFamily(size=4, max_perturbation=0.0)
    with pytest.raises(DegenerateFitError):
        affinity_analysis(family, pool_ds, "auc", gamma=0.9, draws=2, queries_per_draw=10)


def test_affinity_preconditions(pool_ds):
    with pytest.raises(InputError):
        affinity_analysis(small_family(), pool_ds, "zero_one", gamma=0.9, draws=0)


def test_predicted_dcg_intercept():
    assert predicted_dcg_intercept(2, 0.9) == pytest.approx(-0.16309, abs=1e-5)
    assert predicted_dcg_intercept(2, 1.0) == 0.0
    assert predicted_dcg_intercept(10, 0.9, n_docs=2) == pytest.approx(predicted_dcg_intercept(2, 0.9))


def test_dcg_affinity_matches_the_analytic_line(pool_ds):
    report = dcg_affinity_check(small_family(), pool_ds, k=2, gamma=0.9, draws=200, queries_per_draw=50, seed=8)
    assert report.predicted_intercept == pytest.approx(-0.16309, abs=1e-5)
    assert abs(report.slope - 0.8) <= 4 * report.slope_se
    assert abs(report.intercept - report.predicted_intercept) <= 4 * report.intercept_se


@pytest.mark.parametrize("loss, mode", [
    ("logistic", ScoringMode.pointwise),
    ("exponential", ScoringMode.pointwise),
    ("logistic", ScoringMode.pairwise),
])
def test_convex_losses_reverse_the_order(separable_ds, loss, mode):
    report = counterexample_check(separable_ds, loss, 0.9, [1.0, 10.0, 100.0], mode=mode, noise_draws=5)
    assert report.order_reversed
    assert report.witness_scale in (10.0, 100.0)
    assert len(report.rows) == 3


@pytest.mark.parametrize("mode", [ScoringMode.pointwise, ScoringMode.pairwise])
def test_symmetrized_logistic_keeps_the_order(separable_ds, mode):
    report = counterexample_check(separable_ds, "symmetrized_logistic", 0.9, [1.0, 10.0, 100.0], mode=mode,
                                  noise_draws=5)
    assert not report.order_reversed and report.witness_scale is None


@pytest.mark.parametrize("loss", ["logistic", "exponential", "symmetrized_logistic"])
def test_no_reversal_without_noise(separable_ds, loss):
    assert not counterexample_check(separable_ds, loss, 1.0, [1.0, 10.0, 100.0], noise_draws=2).order_reversed


def test_counterexample_preconditions(separable_ds):
    with pytest.raises(InputError):
        counterexample_check(separable_ds, "logistic", 0.5)
    with pytest.raises(InputError):
        counterexample_check(Dataset(separable_ds.queries, separable_ds.feature_dim), "logistic", 0.9)


def test_deviation_bound_without_noise_is_the_clean_bound():
    expected = 8.0 * math.exp(-10_000 * 0.25 / 128)
    assert deviation_bound(10_000, 0.5, 1.0, 0.0) == pytest.approx(expected, rel=1e-12)


def test_deviation_bound_examples():
    assert deviation_bound(10 ** 6, 0.1, 0.9, 6 * math.log(10 ** 6)) == 1.0
    expected = math.exp(math.log(8) + 6 * math.log(10 ** 7) - 500.0)
    assert deviation_bound(10 ** 7, 0.1, 0.9, 6 * math.log(10 ** 7)) == pytest.approx(expected, rel=1e-6)


def test_deviation_bound_is_monotone():
    base = dict(n=200_000, epsilon=0.2, gamma=0.8, shatter_log=5.0)
    value = deviation_bound(**base)
    assert 0.0 < value < 1.0
    assert deviation_bound(**{**base, "n": 400_000}) <= value
    assert deviation_bound(**{**base, "epsilon": 0.3}) <= value
    assert deviation_bound(**{**base, "gamma": 0.9}) <= value


def test_almost_minimizer_variant():
    base = deviation_bound(200_000, 0.2, 0.8, 5.0)
    assert deviation_bound(200_000, 0.2, 0.8, 5.0, optimization_slack=0.01) > base
    assert deviation_bound(200_000, 0.2, 0.8, 5.0, failure_probability=0.05) == pytest.approx(base + 0.05)
    assert deviation_bound(200_000, 0.2, 0.8, 5.0, optimization_slack=0.12) == 1.0


def test_expected_excess_bound():
    assert expected_excess_bound(1000, 0.9, math.log(1000)) == pytest.approx(1.41331, rel=1e-5)
    ratio = expected_excess_bound(500, 0.6, 3.0) / expected_excess_bound(500, 1.0, 3.0)
    assert ratio == pytest.approx(5.0, rel=1e-12)
    assert expected_excess_bound(4000, 0.9, 2.0) == pytest.approx(expected_excess_bound(1000, 0.9, 2.0) / 2)


@pytest.mark.parametrize("gamma", [0.5, 0.3, 1.1])
def test_bounds_reject_gamma_at_or_below_one_half(gamma):
    with pytest.raises(InputError):
        deviation_bound(100, 0.1, gamma, 1.0)
    with pytest.raises(InputError):
        expected_excess_bound(100, gamma, 1.0)


def test_noisy_excess_threshold():
    assert noisy_excess_threshold(0.1, 0.9) == pytest.approx(0.08)
    with pytest.raises(InputError):
        noisy_excess_threshold(0.1, 0.5)


@pytest.mark.slow
def test_full_scale_order_preservation():
    """100 scorers, 1000 draws of 100 queries, gamma 0.9"""
    pool = generate_synthetic(SyntheticSpec(num_queries=1000, prevalence_range=(0.1, 0.9), seed=0))
    family = ScorerFamily()
    zero_one = affinity_analysis(family, pool, "zero_one", 0.9, draws=1000, queries_per_draw=100, seed=0, n_jobs=4)
    assert zero_one.slope_within(3.0) and zero_one.intercept_within(3.0)
    assert zero_one.r_squared >= 0.99
    auc = affinity_analysis(family, pool, "auc", 0.9, draws=1000, queries_per_draw=100, seed=1, n_jobs=4)
    assert auc.spearman_rho >= 0.99
    for k in (2, 10):
        dcg = dcg_affinity_check(family, pool, k, 0.9, draws=1000, queries_per_draw=100, seed=2, n_jobs=4)
        assert dcg.slope_within(3.0) and dcg.intercept_within(3.0)
