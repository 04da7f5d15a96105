from __future__ import annotations

import logging
import math
from typing import Iterable, Mapping

import numpy as np

from ..exceptions import DataError
from .cdr import CallGraph
from .models import PortionAttributes, SubscriptionLabel, UserAttributes, UserId

logger = logging.getLogger(__name__)

BASE_FEATURES = ("log_n_calls_out", "log_total_dur_out", "log_mean_dur_out", "log_std_dur_out", "log_k_out")
PORTION_FEATURES = ("f_n", "f_c", "f_d")


def extract_attributes(graph: CallGraph, user: UserId) -> UserAttributes:
    """Outgoing call statistics of one user; std is the population std of single call durations."""
    if user not in graph:
        raise DataError(f"user {user} is not in the call graph")
    n = total = sum_sq = 0
    for _, stats in graph.outgoing(user):
        n += stats.call_count
        total += stats.total_call_seconds
        sum_sq += stats.sum_sq_call_seconds
    if n == 0:
        raise DataError(f"user {user} has no outgoing calls")
    mean = total / n
    # integer numerator: exact and never negative
    var = (n * sum_sq - total * total) / (n * n)
    return UserAttributes(
        n_calls_out=n,
        total_dur_out=total,
        mean_dur_out=mean,
        std_dur_out=math.sqrt(var) if var > 0 else 0.0,
        k_out=graph.out_degree(user),
    )


def extract_portion_attributes(
    graph: CallGraph, user: UserId, labels: Mapping[UserId, SubscriptionLabel]
) -> PortionAttributes:
    n_i = n_po = c_i = c_po = d_i = d_po = 0
    for callee, stats in graph.outgoing(user):
        label = labels.get(callee)
        if label is None:
            raise DataError(f"callee {callee} of user {user} has no known label")
        is_post = int(label) == SubscriptionLabel.POSTPAID
        n_i += 1
        c_i += stats.call_count
        d_i += stats.total_call_seconds
        if is_post:
            n_po += 1
            c_po += stats.call_count
            d_po += stats.total_call_seconds
    return PortionAttributes(
        f_n=n_po / n_i if n_i else None,
        f_c=c_po / c_i if c_i else None,
        f_d=d_po / d_i if d_i else None,
    )


def log_transform(attrs: UserAttributes) -> np.ndarray:
    return np.log1p(np.array(
        [attrs.n_calls_out, attrs.total_dur_out, attrs.mean_dur_out, attrs.std_dur_out, attrs.k_out],
        dtype=np.float64,
    ))


def collect_attributes(graph: CallGraph, users: Iterable[UserId]) -> dict[UserId, UserAttributes]:
    """Attributes of every user that has outgoing calls; the rest are skipped with a log line."""
    out: dict[UserId, UserAttributes] = {}
    skipped = 0
    for u in users:
        try:
            out[u] = extract_attributes(graph, u)
        except DataError:
            skipped += 1
    if skipped:
        logger.info("Features: skipped %d users without outgoing calls in the graph", skipped)
    return out


def feature_matrix(
    graph: CallGraph,
    attributes: Mapping[UserId, UserAttributes],
    users: list[UserId],
    labels: Mapping[UserId, SubscriptionLabel] | None = None,
    portion: bool = False,
) -> np.ndarray:
    """Rows follow `users`: five log1p attributes, then F_n, F_c, F_d when `portion` is on."""
    width = len(BASE_FEATURES) + (len(PORTION_FEATURES) if portion else 0)
    X = np.empty((len(users), width), dtype=np.float64)
    undefined = 0
    for i, u in enumerate(users):
        X[i, :5] = log_transform(attributes[u])
        if portion:
            if labels is None:
                raise DataError("portion attributes need neighbour labels")
            pa = extract_portion_attributes(graph, u, labels)
            undefined += pa.undefined
            X[i, 5:] = pa.as_tuple()
    if undefined:
        logger.warning("Features: %d users with undefined portion components (set to 0)", undefined)
    return X


def activity_ratios(
    attributes: Mapping[UserId, UserAttributes], labels: Mapping[UserId, SubscriptionLabel]
) -> dict[str, float]:
    """Postpaid over prepaid means of outgoing calls and out-degree."""
    sums = {0: [0, 0, 0], 1: [0, 0, 0]}
    for u, a in attributes.items():
        label = labels.get(u)
        if label is None:
            continue
        acc = sums[int(label)]
        acc[0] += a.n_calls_out
        acc[1] += a.k_out
        acc[2] += 1
    if not sums[0][2] or not sums[1][2]:
        return {"call_ratio": float("nan"), "degree_ratio": float("nan")}
    mean = {lbl: (s[0] / s[2], s[1] / s[2]) for lbl, s in sums.items()}
    return {
        "call_ratio": mean[1][0] / mean[0][0],
        "degree_ratio": mean[1][1] / mean[0][1],
    }
