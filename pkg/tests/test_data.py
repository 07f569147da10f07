import numpy as np
import pytest
from pydantic import ValidationError

import metrics
from data import (LabelSet, NormalizationMode, Provenance, SyntheticSpec, binarize, fit_normalizer,
                  generate_synthetic, load_normalizer, normalize_features, parse_letor, save_normalizer, split,
                  write_letor)
from errors import InputError, LetorParseError
from metrics import RankedQuery

LETOR_SAMPLE = """\
2 qid:10 1:0.5 3:1.0 #doc-a
0 qid:10 2:0.25
# a comment line

1 qid:7 1:1 2:2 3:3 #doc-c
"""


def write(tmp_path, text, name="sample.txt"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_synthetic_shapes_and_determinism():
    spec = SyntheticSpec(num_queries=20, docs_per_query=8, feature_dim=3, seed=4)
    ds = generate_synthetic(spec)
    assert len(ds) == 20 and ds.num_documents == 160 and ds.feature_dim == 3
    assert ds.provenance is Provenance.synthetic and ds.has_oracle
    again = generate_synthetic(spec)
    for a, b in zip(ds.queries, again.queries):
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)


def test_total_samples_sets_the_query_count():
    assert len(generate_synthetic(SyntheticSpec(total_samples=500, docs_per_query=10))) == 50
    with pytest.raises(ValidationError):
        SyntheticSpec(total_samples=5, docs_per_query=10)


def test_threshold_labels_follow_the_oracle(separable_ds):
    for query in separable_ds.queries:
        p = separable_ds.oracle_for(query.query_id).probability(query.features)
        np.testing.assert_array_equal(query.labels, (p > 0.5).astype(int))


def test_prevalence_range_tilts_queries():
    ds = generate_synthetic(SyntheticSpec(num_queries=30, prevalence_range=(0.1, 0.9), seed=8))
    biases = [ds.oracle_for(qid).bias for qid in ds.query_ids]
    assert all(np.log(0.1 / 0.9) <= b <= np.log(0.9 / 0.1) for b in biases)
    assert len(set(biases)) == 30
    with pytest.raises(ValidationError):
        SyntheticSpec(prevalence_range=(0.0, 0.5))


def test_parse_letor(tmp_path):
    ds = parse_letor(write(tmp_path, LETOR_SAMPLE))
    assert ds.provenance is Provenance.letor_file and not ds.has_oracle
    assert ds.query_ids == ["10", "7"] and ds.feature_dim == 3
    first = ds.queries[0]
    np.testing.assert_allclose(first.features, [[0.5, 0.0, 1.0], [0.0, 0.25, 0.0]])
    np.testing.assert_array_equal(first.labels, [2, 0])
    assert first.doc_ids == ("doc-a", None)


@pytest.mark.parametrize("line", [
    "x qid:1 1:0.5",
    "1 1:0.5",
    "1 qid:1 2:0.5 1:0.3",
    "1 qid:1 0:0.5",
    "1 qid:1 1:abc",
    "-1 qid:1 1:0.5",
])
def test_parse_errors_carry_the_line_number(tmp_path, line):
    with pytest.raises(LetorParseError) as info:
        parse_letor(write(tmp_path, "1 qid:1 1:0.1\n" + line + "\n"))
    assert info.value.line_number == 2
    assert str(info.value).startswith("line 2:")


def test_write_then_parse(tmp_path, separable_ds):
    path = tmp_path / "out.txt"
    write_letor(separable_ds, path)
    parsed = parse_letor(path)
    assert parsed.query_ids == separable_ds.query_ids
    np.testing.assert_array_equal(parsed.labels(), separable_ds.labels())
    np.testing.assert_array_equal(parsed.stacked_features(), separable_ds.stacked_features())


def test_binarize(tmp_path):
    ds = parse_letor(write(tmp_path, LETOR_SAMPLE))
    np.testing.assert_array_equal(binarize(ds).labels(), [1, 0, 1])
    np.testing.assert_array_equal(binarize(ds, threshold=2).labels(), [1, 0, 0])
    np.testing.assert_array_equal(binarize(ds).labels(LabelSet.noisy), [1, 0, 1])


def test_split_is_deterministic_and_disjoint(separable_ds):
    train, holdout = split(separable_ds, 0.8, seed=3)
    assert (len(train), len(holdout)) == (80, 20)
    assert set(train.query_ids).isdisjoint(holdout.query_ids)
    assert train.query_ids == sorted(train.query_ids, key=separable_ds.query_ids.index)
    again, _ = split(separable_ds, 0.8, seed=3)
    assert again.query_ids == train.query_ids
    assert train.has_oracle


@pytest.mark.parametrize("fraction", [0.0, 1.0, 0.999])
def test_split_rejects_empty_sides(separable_ds, fraction):
    with pytest.raises(InputError):
        split(separable_ds, fraction, seed=0)


def test_per_query_min_max(separable_ds):
    normalized = normalize_features(separable_ds, NormalizationMode.per_query_min_max)
    for query in normalized.queries:
        assert query.features.min() >= 0.0 and query.features.max() <= 1.0
    assert not normalized.has_oracle


def test_global_standardize_uses_training_statistics(separable_ds):
    train, holdout = split(separable_ds, 0.5, seed=1)
    normalizer = fit_normalizer(train, NormalizationMode.global_standardize)
    stacked = normalizer.transform(train).stacked_features()
    np.testing.assert_allclose(stacked.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(stacked.std(axis=0), 1.0, atol=1e-12)
    assert normalizer.transform(holdout).feature_dim == separable_ds.feature_dim


def test_marginal_positive_rate_is_one_half():
    ds = generate_synthetic(SyntheticSpec(num_queries=1000, docs_per_query=10, feature_dim=5, seed=21))
    assert ds.num_documents == 10000
    assert ds.labels().mean() == pytest.approx(0.5, abs=0.015)


def test_oracle_beats_a_random_scorer():
    ds = generate_synthetic(SyntheticSpec(num_queries=1000, docs_per_query=10, feature_dim=5, seed=22,
                                          label_mode="threshold"))
    rng = np.random.default_rng(5)
    wins = total = 0
    for query in ds.queries:
        if not query.has_mixed_labels():
            continue
        oracle_scores = ds.oracle_for(query.query_id).probability(query.features)
        # metrics are losses, so a better ranking has the lower value
        oracle = metrics.auc(RankedQuery(oracle_scores, query.labels))
        chance = metrics.auc(RankedQuery(rng.random(query.size), query.labels))
        wins += oracle < chance
        total += 1
    assert wins >= 0.99 * total


def test_per_query_min_max_is_idempotent(separable_ds):
    once = normalize_features(separable_ds, NormalizationMode.per_query_min_max)
    twice = normalize_features(once, NormalizationMode.per_query_min_max)
    for a, b in zip(once.queries, twice.queries):
        np.testing.assert_allclose(b.features, a.features, atol=1e-12)


def test_parse_single_letor_line(tmp_path):
    ds = parse_letor(write(tmp_path, "1 qid:10 1:0.5 2:0.3 #docA\n"))
    query = ds.queries[0]
    assert query.query_id == "10"
    assert list(query.labels) == [1]
    np.testing.assert_array_equal(query.features, [[0.5, 0.3]])
    assert query.doc_ids == ("docA",)


def test_normalizer_mode_must_match(separable_ds):
    normalizer = fit_normalizer(separable_ds, NormalizationMode.global_standardize)
    with pytest.raises(InputError):
        normalize_features(separable_ds, NormalizationMode.per_query_min_max, normalizer)
    normalized = normalize_features(separable_ds, "global_standardize", normalizer)
    assert normalized.feature_dim == separable_ds.feature_dim


def test_saved_normalizer_reapplies_training_statistics(tmp_path, separable_ds):
    train, test = split(separable_ds, 0.5, seed=4)
    normalizer = fit_normalizer(train, NormalizationMode.global_standardize)
    save_normalizer(normalizer, tmp_path / "norm.json")
    loaded = load_normalizer(tmp_path / "norm.json")
    assert loaded.mode is NormalizationMode.global_standardize
    np.testing.assert_allclose(loaded.transform(test).stacked_features(),
                               normalizer.transform(test).stacked_features(), rtol=1e-12)

    (tmp_path / "broken.json").write_text('{"mode": "global_standardize"}')
    with pytest.raises(InputError):
        load_normalizer(tmp_path / "broken.json")
