import numpy as np
import pytest

from src.exceptions import DataError, ModelError
from src.services.classify import (
    adaboost_predict,
    adaboost_train,
    evaluate,
    fit_and_score,
    nb_posterior,
    nb_posteriors,
    nb_predict,
    nb_train,
    repeated_splits,
    sample_training_set,
    scaled_per_class,
    training_error,
)
from src.services.models import PROB_FLOOR, GaussianNbModel, StumpEnsemble, SubscriptionLabel

PRE, POST = SubscriptionLabel.PREPAID, SubscriptionLabel.POSTPAID


def balanced_labels(n_per_class):
    return {u: (POST if u % 2 else PRE) for u in range(2 * n_per_class)}


def gaussian_blobs(n, shift, seed=0, dims=3):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n)
    X = rng.normal(size=(2 * n, dims))
    X[y == 1] += shift
    return X, y


# --- splits


def test_split_is_balanced_disjoint_and_reproducible():
    labels = balanced_labels(50)

    first = sample_training_set(labels, 10, seed=4)
    again = sample_training_set(labels, 10, seed=4)

    assert first == again
    assert len(first.train) == 20
    assert sum(int(labels[u]) for u in first.train) == 10
    assert set(first.train).isdisjoint(first.test)
    assert set(first.train) | set(first.test) == set(labels)


def test_split_changes_with_seed():
    labels = balanced_labels(50)

    splits = repeated_splits(labels, 10, seeds=[1, 2])

    assert splits[0].train != splits[1].train


def test_split_short_class_names_the_class():
    labels = {1: PRE, 2: PRE, 3: PRE, 4: POST}

    with pytest.raises(DataError, match="postpaid"):
        sample_training_set(labels, 2, seed=0)


def test_scaled_per_class_caps_small_corpora():
    labels = balanced_labels(100)

    assert scaled_per_class(labels, 10_000) == 20
    assert scaled_per_class(labels, 5) == 5


# --- naive bayes


def test_nb_posteriors_sum_to_one_and_are_clamped():
    X, y = gaussian_blobs(200, shift=50.0)
    model = nb_train(X, y)

    post = nb_posteriors(model, X)

    np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-9)
    assert post.min() >= PROB_FLOOR
    assert post.max() <= 1.0 - PROB_FLOOR


def test_nb_separates_shifted_classes():
    X, y = gaussian_blobs(300, shift=3.0)
    model = nb_train(X, y)

    accuracy = float(np.mean(nb_predict(model, X) == y))

    assert accuracy > 0.95
    assert model.class_prior == [0.5, 0.5]


def test_nb_variance_floor_on_constant_feature():
    X, y = gaussian_blobs(20, shift=1.0)
    X[:, 0] = 7.0

    model = nb_train(X, y)

    assert model.feature_var[0][0] == model.var_floor
    p0, p1 = nb_posterior(model, X[0])
    assert p0 + p1 == pytest.approx(1.0)


def test_nb_rejects_dimension_mismatch():
    X, y = gaussian_blobs(20, shift=1.0, dims=3)
    model = nb_train(X, y)

    with pytest.raises(ModelError):
        nb_posterior(model, np.zeros(4))


def test_nb_needs_two_examples_per_class():
    X = np.zeros((3, 2))

    with pytest.raises(ModelError):
        nb_train(X, np.array([0, 0, 1]))


def test_nb_model_round_trips_through_json():
    X, y = gaussian_blobs(30, shift=1.0)
    model = nb_train(X, y)

    restored = GaussianNbModel.model_validate_json(model.model_dump_json())

    np.testing.assert_array_equal(nb_posteriors(restored, X), nb_posteriors(model, X))


def test_nb_on_label_independent_features_is_near_chance():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(4000, 5))
    y = np.repeat([0, 1], 2000)
    rng.shuffle(y)
    model = nb_train(X[:1000], y[:1000])

    accuracy = float(np.mean(nb_predict(model, X[1000:]) == y[1000:]))

    assert 0.45 < accuracy < 0.55


# --- adaboost


def test_adaboost_separable_single_feature():
    # Arrange
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0, 0, 1, 1])

    # Act
    ensemble = adaboost_train(X, y, rounds=10)

    # Assert
    assert ensemble.rounds == 1
    stump = ensemble.stumps[0]
    assert (stump.feature, stump.threshold, stump.polarity) == (0, 2.5, 1)
    assert training_error(ensemble, X, y) == 0.0
    assert adaboost_predict(ensemble, np.array([[0.0], [10.0]])).tolist() == [0, 1]


def test_adaboost_picks_informative_feature_with_negative_polarity():
    X = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0], [5.0, 4.0]])
    y = np.array([1, 1, 0, 0])

    ensemble = adaboost_train(X, y, rounds=5)

    assert ensemble.stumps[0].feature == 1
    assert ensemble.stumps[0].polarity == -1
    assert training_error(ensemble, X, y) == 0.0


def test_adaboost_on_flipped_labels_flips_polarities():
    # 64 samples keep round-one weights exact
    X, y = gaussian_blobs(32, shift=1.0, seed=6, dims=2)

    ensemble = adaboost_train(X, y, rounds=4)
    flipped = adaboost_train(X, 1 - y, rounds=4)

    assert flipped.rounds == ensemble.rounds
    for a, b in zip(ensemble.stumps, flipped.stumps):
        assert (b.feature, b.threshold, b.polarity) == (a.feature, a.threshold, -a.polarity)
        assert b.weight == pytest.approx(a.weight, rel=1e-9)
    assert adaboost_predict(flipped, X).tolist() == (1 - adaboost_predict(ensemble, X)).tolist()


def test_adaboost_identical_features_cannot_beat_chance():
    X = np.ones((6, 2))
    y = np.array([0, 1, 0, 1, 0, 1])

    with pytest.raises(ModelError):
        adaboost_train(X, y, rounds=5)


def test_adaboost_single_class_is_rejected():
    with pytest.raises(ModelError):
        adaboost_train(np.arange(4.0).reshape(-1, 1), np.zeros(4), rounds=3)


def test_adaboost_boosting_reduces_training_error_on_blobs():
    X, y = gaussian_blobs(200, shift=1.5, seed=2)

    one = adaboost_train(X, y, rounds=1)
    many = adaboost_train(X, y, rounds=30)

    assert training_error(many, X, y) <= training_error(one, X, y)
    assert StumpEnsemble.model_validate_json(many.model_dump_json()) == many


# --- evaluation


def test_evaluate_counts_and_rates():
    truth = {1: PRE, 2: PRE, 3: POST, 4: POST}
    predictions = {1: PRE, 2: POST, 3: POST, 4: POST}

    cm = evaluate(predictions, truth)

    assert cm.counts == [[1, 1], [0, 2]]
    assert cm.accuracy == 0.75
    assert cm.rates == [[0.5, 0.5], [0.0, 1.0]]


def test_evaluate_requires_truth_for_every_prediction():
    with pytest.raises(DataError):
        evaluate({1: PRE, 9: POST}, {1: PRE})


def test_fit_and_score_on_shifted_blobs():
    # Arrange
    X, y = gaussian_blobs(300, shift=2.5, seed=5)
    users = list(range(len(y)))
    labels = {u: SubscriptionLabel(int(y[u])) for u in users}
    split = sample_training_set(labels, 60, seed=1)

    # Act
    scores, nb, boost = fit_and_score(X, y, users, split, rounds=20)

    # Assert
    assert scores["naive_bayes"].total == len(split.test)
    assert scores["naive_bayes"].accuracy > 0.9
    assert scores["adaboost"].accuracy > 0.85
    assert boost.rounds <= 20
    assert nb.n_features == 3
