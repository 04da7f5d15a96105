from __future__ import annotations

import logging
import math
from typing import Iterable, Mapping

import numpy as np

from ..exceptions import DataError, ModelError
from .models import (
    PROB_FLOOR,
    ConfusionMatrix,
    GaussianNbModel,
    Stump,
    StumpEnsemble,
    SubscriptionLabel,
    TrainTestSplit,
    UserId,
)

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-6
_LOG_2PI = math.log(2.0 * math.pi)


# --- Splits ------------------------------------------------------------------


def sample_training_set(
    labels: Mapping[UserId, SubscriptionLabel], n_per_class: int, seed: int
) -> TrainTestSplit:
    """Balanced training sample drawn per class without replacement; the rest is the test set."""
    rng = np.random.default_rng(seed)
    train: list[UserId] = []
    for label in SubscriptionLabel:
        members = sorted(u for u, lbl in labels.items() if int(lbl) == label)
        if len(members) < n_per_class:
            raise DataError(
                f"class {label.name.lower()} has {len(members)} users, {n_per_class} requested for training"
            )
        picked = rng.choice(len(members), size=n_per_class, replace=False)
        train.extend(members[i] for i in sorted(picked))
    train_set = set(train)
    test = sorted(u for u in labels if u not in train_set)
    return TrainTestSplit(train=sorted(train), test=test, seed=seed)


def scaled_per_class(labels: Mapping[UserId, SubscriptionLabel], requested: int) -> int:
    """Shrink the per-class training size to a fifth of the smaller class on small corpora."""
    sizes = [sum(1 for lbl in labels.values() if int(lbl) == label) for label in SubscriptionLabel]
    cap = max(2, min(sizes) // 5)
    if requested > cap:
        logger.info("Split: scaling n_per_class %d -> %d for class sizes %s", requested, cap, sizes)
        return cap
    return requested


def repeated_splits(
    labels: Mapping[UserId, SubscriptionLabel], n_per_class: int, seeds: Iterable[int]
) -> list[TrainTestSplit]:
    return [sample_training_set(labels, n_per_class, s) for s in seeds]


# --- Gaussian Naive Bayes ----------------------------------------------------


def nb_train(features: np.ndarray, labels: np.ndarray, var_floor: float = VAR_FLOOR) -> GaussianNbModel:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ModelError("features must be a matrix with one row per label")
    means, variances, priors = [], [], []
    for label in SubscriptionLabel:
        rows = X[y == label]
        if rows.shape[0] < 2:
            raise ModelError(f"class {label.name.lower()} needs at least 2 training examples, got {rows.shape[0]}")
        means.append(rows.mean(axis=0).tolist())
        variances.append(np.maximum(rows.var(axis=0), var_floor).tolist())
        priors.append(rows.shape[0] / X.shape[0])
    model = GaussianNbModel(class_prior=priors, feature_mean=means, feature_var=variances, var_floor=var_floor)
    logger.info("NaiveBayes: trained n=%d dims=%d priors=%s", X.shape[0], X.shape[1],
                [round(p, 4) for p in priors])
    return model


def _log_joint(model: GaussianNbModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ModelError(f"expected {model.n_features} features, got {X.shape[1]}")
    mean = np.asarray(model.feature_mean)
    var = np.asarray(model.feature_var)
    out = np.empty((X.shape[0], 2))
    for c in range(2):
        ll = -0.5 * (_LOG_2PI + np.log(var[c])) - (X - mean[c]) ** 2 / (2.0 * var[c])
        out[:, c] = math.log(model.class_prior[c]) + ll.sum(axis=1)
    return out


def nb_posteriors(model: GaussianNbModel, X: np.ndarray, clamp: bool = True) -> np.ndarray:
    """(n, 2) posterior matrix normalised in log space; columns are (prepaid, postpaid)."""
    lj = _log_joint(model, X)
    norm = np.logaddexp(lj[:, 0], lj[:, 1])
    post = np.exp(lj - norm[:, None])
    if clamp:
        post = np.clip(post, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return post


def nb_posterior(model: GaussianNbModel, x: np.ndarray) -> tuple[float, float]:
    p = nb_posteriors(model, np.asarray(x, dtype=np.float64).reshape(1, -1))[0]
    return float(p[0]), float(p[1])


def nb_predict(model: GaussianNbModel, X: np.ndarray) -> np.ndarray:
    """Argmax decisions on the clamped posteriors; ties go to prepaid."""
    post = nb_posteriors(model, X)
    return (post[:, 1] > post[:, 0]).astype(int)


# --- AdaBoost over decision stumps -------------------------------------------


def _signed(labels: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(labels).astype(int) == SubscriptionLabel.POSTPAID, 1.0, -1.0)


def _best_stump(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[int, float, int, float]:
    """Exhaustive weighted-error search; returns (feature, threshold, polarity, error).

    A stump with polarity +1 predicts +1 where x > threshold, -1 elsewhere.
    """
    best = (0, 0.0, 1, math.inf)
    w_pos = np.where(y > 0, w, 0.0)
    w_neg = np.where(y < 0, w, 0.0)
    total_w = w.sum()
    total_neg = w_neg.sum()
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        # error of polarity +1 with the first i samples on the left (predicted -1)
        left_pos = np.concatenate(([0.0], np.cumsum(w_pos[order])))
        left_neg = np.concatenate(([0.0], np.cumsum(w_neg[order])))
        err_plus = left_pos + (total_neg - left_neg)
        # valid split points: before everything, or between distinct consecutive values
        valid = np.concatenate(([True], xs[:-1] < xs[1:], [False]))
        thresholds = np.concatenate(([xs[0] - 1.0], (xs[:-1] + xs[1:]) / 2.0, [xs[-1]]))
        err_minus = total_w - err_plus
        cand_plus = np.where(valid, err_plus, math.inf)
        cand_minus = np.where(valid, err_minus, math.inf)
        i_p, i_m = int(np.argmin(cand_plus)), int(np.argmin(cand_minus))
        if cand_plus[i_p] < best[3]:
            best = (j, float(thresholds[i_p]), 1, float(cand_plus[i_p]))
        if cand_minus[i_m] < best[3]:
            best = (j, float(thresholds[i_m]), -1, float(cand_minus[i_m]))
    return best


def _stump_predict(stump: Stump, X: np.ndarray) -> np.ndarray:
    return stump.polarity * np.where(X[:, stump.feature] > stump.threshold, 1.0, -1.0)


def adaboost_train(features: np.ndarray, labels: np.ndarray, rounds: int = 50) -> StumpEnsemble:
    """Discrete AdaBoost; each round picks the weighted-error-minimising stump."""
    X = np.asarray(features, dtype=np.float64)
    y = _signed(labels)
    if rounds < 1:
        raise ModelError("rounds must be >= 1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ModelError("AdaBoost needs both classes in the training data")
    w = np.full(X.shape[0], 1.0 / X.shape[0])
    stumps: list[Stump] = []
    for r in range(rounds):
        j, thr, pol, err = _best_stump(X, y, w)
        if err >= 0.5 - 1e-12:
            if not stumps:
                raise ModelError("no decision stump beats chance on the training data")
            logger.info("AdaBoost: early stop at round %d (weighted error %.4f)", r + 1, err)
            break
        eps = min(max(err, PROB_FLOOR), 1.0 - PROB_FLOOR)
        alpha = 0.5 * math.log((1.0 - eps) / eps)
        stump = Stump(feature=j, threshold=thr, polarity=pol, weight=alpha)
        stumps.append(stump)
        pred = _stump_predict(stump, X)
        w = w * np.exp(-alpha * y * pred)
        w /= w.sum()
        if err == 0.0:
            break
    ensemble = StumpEnsemble(stumps=stumps, rounds=len(stumps))
    logger.info("AdaBoost: trained rounds=%d training_error=%.4f", ensemble.rounds,
                training_error(ensemble, X, labels))
    return ensemble


def adaboost_score(ensemble: StumpEnsemble, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    score = np.zeros(X.shape[0])
    for stump in ensemble.stumps:
        score += stump.weight * _stump_predict(stump, X)
    return score


def adaboost_predict(ensemble: StumpEnsemble, X: np.ndarray) -> np.ndarray:
    """Sign of the weighted vote; a zero vote is prepaid."""
    return (adaboost_score(ensemble, X) > 0).astype(int)


def training_error(ensemble: StumpEnsemble, X: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(adaboost_predict(ensemble, X) != np.asarray(labels).astype(int)))


# --- Evaluation --------------------------------------------------------------


def fit_and_score(
    X: np.ndarray,
    y: np.ndarray,
    users: list[UserId],
    split: TrainTestSplit,
    rounds: int = 50,
) -> tuple[dict[str, ConfusionMatrix], GaussianNbModel, StumpEnsemble]:
    """Train both classifiers on the split's train rows and score them on its test rows."""
    row = {u: i for i, u in enumerate(users)}
    train_idx = [row[u] for u in split.train if u in row]
    test_idx = [row[u] for u in split.test if u in row]
    if not test_idx:
        raise DataError("empty test set")
    X_tr, y_tr = X[train_idx], y[train_idx]
    X_te = X[test_idx]
    truth = {users[i]: SubscriptionLabel(int(y[i])) for i in test_idx}

    nb = nb_train(X_tr, y_tr)
    boost = adaboost_train(X_tr, y_tr, rounds=rounds)
    scores: dict[str, ConfusionMatrix] = {}
    for name, pred in (("naive_bayes", nb_predict(nb, X_te)), ("adaboost", adaboost_predict(boost, X_te))):
        predictions = {users[i]: SubscriptionLabel(int(p)) for i, p in zip(test_idx, pred)}
        scores[name] = evaluate(predictions, truth)
        logger.info("Classify: %s accuracy=%.4f test=%d", name, scores[name].accuracy, len(test_idx))
    return scores, nb, boost


def evaluate(
    predictions: Mapping[UserId, SubscriptionLabel], truth: Mapping[UserId, SubscriptionLabel]
) -> ConfusionMatrix:
    counts = [[0, 0], [0, 0]]
    for u, predicted in predictions.items():
        actual = truth.get(u)
        if actual is None:
            raise DataError(f"no truth label for user {u}")
        counts[int(actual)][int(predicted)] += 1
    return ConfusionMatrix(counts=counts)
