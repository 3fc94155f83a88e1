"""Accuracy measures: precision@N, macro-averaged recall, RMSE, MAE."""

import math
from dataclasses import dataclass


class MetricError(ValueError):
    pass


@dataclass
class AccuracyReport:
    metric: str
    value: float
    n_users: int
    n_predictions: int


def precision_at_n(recommendations: dict, test_sets: dict, n: int) -> AccuracyReport:
    """Total hits / total recommendations issued, over all evaluated users.

    A user with fewer than n candidates contributes fewer slots to the
    denominator.  Users absent from test_sets count their slots with zero
    hits.
    """
    total_recs = 0
    hits = 0
    n_users = 0
    for user, recs in recommendations.items():
        if len(recs) > n:
            raise MetricError(f"user {user}: {len(recs)} recommendations > n={n}")
        total_recs += len(recs)
        test = test_sets.get(user, set())
        hits += sum(1 for r in recs if r in test)
        n_users += 1
    if total_recs == 0:
        raise MetricError("precision undefined: no recommendations issued")
    return AccuracyReport("precision", hits / total_recs, n_users, total_recs)


def macro_recall(recommendations: dict, test_sets: dict, n: int) -> AccuracyReport:
    """Mean over users of per-user recall; users with empty test sets excluded."""
    recalls = []
    n_preds = 0
    for user, recs in recommendations.items():
        test = test_sets.get(user, set())
        if not test:
            continue
        n_preds += len(recs)
        recalls.append(sum(1 for r in recs if r in test) / len(test))
    if not recalls:
        raise MetricError("macro recall undefined: no users with test data")
    return AccuracyReport("recall", sum(recalls) / len(recalls), len(recalls), n_preds)


def _check_pairs(predictions, actuals):
    if len(predictions) != len(actuals):
        raise MetricError(f"length mismatch: {len(predictions)} vs {len(actuals)}")
    if len(predictions) == 0:
        raise MetricError("empty prediction list")


def rmse(predictions, actuals) -> float:
    _check_pairs(predictions, actuals)
    return math.sqrt(sum((p - a) ** 2 for p, a in zip(predictions, actuals))
                     / len(predictions))


def mae(predictions, actuals) -> float:
    _check_pairs(predictions, actuals)
    return sum(abs(p - a) for p, a in zip(predictions, actuals)) / len(predictions)
