import numpy as np
import pytest
from pydantic import ValidationError

from data import LabelSet
from errors import InputError
from noise import NoiseSpec, corrupt_dataset, corrupt_labels


def test_flip_rate_per_class_is_one_minus_gamma():
    labels = np.repeat([0, 1], 5000)
    gamma = 0.9
    result = corrupt_labels(labels, NoiseSpec(gamma=gamma, seed=11))
    sigma = np.sqrt(gamma * (1 - gamma) / 5000)
    for cls in (0, 1):
        rate = result.flips[labels == cls].mean()
        assert abs(rate - (1 - gamma)) <= 3 * sigma
    np.testing.assert_array_equal(result.noisy[result.flips], 1 - labels[result.flips])
    np.testing.assert_array_equal(result.noisy[~result.flips], labels[~result.flips])


def test_same_seed_gives_identical_bytes():
    labels = np.random.default_rng(0).integers(0, 2, 10_000)
    first = corrupt_labels(labels, NoiseSpec(gamma=0.7, seed=5))
    second = corrupt_labels(labels, NoiseSpec(gamma=0.7, seed=5))
    assert first.noisy.tobytes() == second.noisy.tobytes()
    other = corrupt_labels(labels, NoiseSpec(gamma=0.7, seed=6))
    assert other.noisy.tobytes() != first.noisy.tobytes()


def test_extreme_gammas():
    labels = np.array([0, 1, 1, 0, 1])
    np.testing.assert_array_equal(corrupt_labels(labels, NoiseSpec(gamma=1.0)).noisy, labels)
    np.testing.assert_array_equal(corrupt_labels(labels, NoiseSpec(gamma=0.0)).noisy, 1 - labels)
    assert corrupt_labels(labels, NoiseSpec(gamma=0.0)).flip_rate == 1.0


def test_labels_must_be_binary():
    with pytest.raises(InputError):
        corrupt_labels([0, 2, 1], NoiseSpec(gamma=0.9))


@pytest.mark.parametrize("gamma", [-0.1, 1.2])
def test_gamma_range(gamma):
    with pytest.raises(ValidationError):
        NoiseSpec(gamma=gamma)


def test_dataset_noise_does_not_depend_on_query_order(separable_ds):
    spec = NoiseSpec(gamma=0.8, seed=3)
    forward = corrupt_dataset(separable_ds, spec)
    backward = corrupt_dataset(separable_ds.with_queries(separable_ds.queries[::-1]), spec)
    by_id = {q.query_id: q.noisy_labels for q in backward.queries}
    for query in forward.queries:
        np.testing.assert_array_equal(query.noisy_labels, by_id[query.query_id])
        np.testing.assert_array_equal(query.labels, separable_ds.queries[int(query.query_id)].labels)


def test_dataset_noise_keeps_clean_labels(separable_ds):
    noisy = corrupt_dataset(separable_ds, NoiseSpec(gamma=0.6, seed=1))
    np.testing.assert_array_equal(noisy.labels(LabelSet.clean), separable_ds.labels(LabelSet.clean))
    assert (noisy.labels(LabelSet.noisy) != noisy.labels(LabelSet.clean)).any()


def test_double_flip_restores_the_labels():
    labels = np.random.default_rng(2).integers(0, 2, size=1000)
    once = corrupt_labels(labels, NoiseSpec(gamma=0.0, seed=5))
    twice = corrupt_labels(once.noisy, NoiseSpec(gamma=0.0, seed=6))
    np.testing.assert_array_equal(twice.noisy, labels)
    assert once.flip_rate == 1.0


def test_flips_are_independent_of_the_features():
    n = 10000
    feature = np.random.default_rng(8).normal(size=n)
    labels = (feature > 0).astype(int)
    result = corrupt_labels(labels, NoiseSpec(gamma=0.8, seed=9))
    correlation = np.corrcoef(result.flips.astype(float), feature)[0, 1]
    assert abs(correlation) <= 3 / np.sqrt(n)
