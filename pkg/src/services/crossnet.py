from __future__ import annotations

import logging
import math
from concurrent.futures import Executor
from typing import Iterable, Literal, Mapping

import numpy as np

from ..exceptions import DataError
from .cdr import CallGraph, build_call_graph
from .classify import evaluate, fit_and_score
from .features import collect_attributes
from .models import (
    BipartiteGraph,
    CdrRecord,
    ConfusionMatrix,
    PropagationResult,
    SubscriptionLabel,
    TrainTestSplit,
    UserAttributes,
    UserId,
)

logger = logging.getLogger(__name__)

Side = Literal["a", "b"]

SWAPS_PER_EDGE = 10
_ATTEMPTS_PER_SWAP = 50
_DRAW_CHUNK = 4096


# --- Attribute experiment ----------------------------------------------------


def _check_disjoint(side_a: Iterable[UserId], side_b: Iterable[UserId]) -> tuple[set[UserId], set[UserId]]:
    a, b = set(side_a), set(side_b)
    if a & b:
        raise DataError(f"{len(a & b)} users declared on both sides")
    return a, b


def inter_company_graph(records: Iterable[CdrRecord], side_a: Iterable[UserId], side_b: Iterable[UserId]) -> CallGraph:
    """Call graph restricted to A->B events."""
    a, b = _check_disjoint(side_a, side_b)
    return build_call_graph(records, a | b, keep=lambda u, v: u in a and v in b)


def inter_company_attributes(
    records: Iterable[CdrRecord], side_a: Iterable[UserId], side_b: Iterable[UserId]
) -> tuple[CallGraph, dict[UserId, UserAttributes]]:
    """Per-A-user attributes seen only through calls into B; A users without such calls drop out."""
    a, b = _check_disjoint(side_a, side_b)
    graph = inter_company_graph(records, a, b)
    attributes = collect_attributes(graph, sorted(a))
    logger.info("Crossnet: inter-company attributes users=%d of side_a=%d", len(attributes), len(a))
    return graph, attributes


def classify_cross(
    X: np.ndarray, y: np.ndarray, users: list[UserId], split: TrainTestSplit, rounds: int = 50
) -> dict[str, ConfusionMatrix]:
    scores, _, _ = fit_and_score(X, y, users, split, rounds=rounds)
    return scores


# --- Majority propagation ----------------------------------------------------


def _in_neighbours(graph: BipartiteGraph, target_side: Side) -> dict[UserId, list[UserId]]:
    targets = graph.side_b if target_side == "b" else graph.side_a
    incoming: dict[UserId, list[UserId]] = {u: [] for u in targets}
    for u, v in graph.edges:
        if v in incoming:
            incoming[v].append(u)
    return incoming


def majority_infer(
    graph: BipartiteGraph,
    target_side: Side,
    source_labels: Mapping[UserId, SubscriptionLabel],
    balance: float,
    rng_seed: int | np.random.SeedSequence,
) -> dict[UserId, SubscriptionLabel]:
    """Majority label of each target's in-neighbours; ties and isolated targets draw postpaid with p=balance."""
    rng = np.random.default_rng(rng_seed)
    incoming = _in_neighbours(graph, target_side)
    out: dict[UserId, SubscriptionLabel] = {}
    random_draws = 0
    for u in sorted(incoming):
        post = pre = 0
        for v in incoming[u]:
            if int(source_labels[v]) == SubscriptionLabel.POSTPAID:
                post += 1
            else:
                pre += 1
        if post > pre:
            out[u] = SubscriptionLabel.POSTPAID
        elif pre > post:
            out[u] = SubscriptionLabel.PREPAID
        else:
            random_draws += 1
            out[u] = SubscriptionLabel(int(rng.random() < balance))
    logger.debug("Crossnet: majority side=%s targets=%d random=%d", target_side, len(out), random_draws)
    return out


def degree_preserving_randomize(
    graph: BipartiteGraph, n_swaps: int | None = None, rng_seed: int | np.random.SeedSequence = 0
) -> BipartiteGraph:
    """Same-direction double-edge swaps (a1,b1),(a2,b2) -> (a1,b2),(a2,b1) on a private copy.

    Swaps that would duplicate an edge or change nothing are rejected and not counted.
    """
    lists = {"ab": list(graph.a_to_b), "ba": list(graph.b_to_a)}
    if len(lists["ab"]) < 2 and len(lists["ba"]) < 2:
        raise DataError("randomization needs at least 2 edges in one direction")
    pools = [lst for lst in lists.values() if len(lst) >= 2]
    total = sum(len(lst) for lst in pools)
    share = [len(lst) / total for lst in pools]

    if n_swaps is None:
        n_swaps = SWAPS_PER_EDGE * len(graph.edges)
    edge_set = set(graph.edges)
    rng = np.random.default_rng(rng_seed)
    max_attempts = max(_ATTEMPTS_PER_SWAP * n_swaps, 1000) if n_swaps else 0
    accepted = attempts = 0
    while accepted < n_swaps and attempts < max_attempts:
        draws = rng.random((_DRAW_CHUNK, 3))
        for pick, x, y in draws:
            if accepted >= n_swaps or attempts >= max_attempts:
                break
            attempts += 1
            lst = pools[0] if len(pools) == 1 or pick < share[0] else pools[1]
            m = len(lst)
            i, j = int(x * m), int(y * m)
            if i == j:
                continue
            (u1, v1), (u2, v2) = lst[i], lst[j]
            if u1 == u2 or v1 == v2:
                continue
            e1, e2 = (u1, v2), (u2, v1)
            if e1 in edge_set or e2 in edge_set:
                continue
            edge_set.discard(lst[i])
            edge_set.discard(lst[j])
            edge_set.add(e1)
            edge_set.add(e2)
            lst[i], lst[j] = e1, e2
            accepted += 1
    if accepted < n_swaps:
        logger.warning("Randomize: accepted=%d of requested=%d after attempts=%d", accepted, n_swaps, attempts)
    else:
        logger.debug("Randomize: accepted=%d attempts=%d", accepted, attempts)
    return BipartiteGraph(side_a=graph.side_a, side_b=graph.side_b, edges=tuple(sorted(edge_set)))


def _balance(graph: BipartiteGraph) -> float:
    if not graph.side_a:
        raise DataError("side A has no labeled users")
    return sum(int(lbl) for lbl in graph.side_a.values()) / len(graph.side_a)


def _run_realization(
    graph: BipartiteGraph, seed: np.random.SeedSequence, randomize: bool, n_swaps: int | None
) -> tuple[dict[UserId, SubscriptionLabel], dict[UserId, SubscriptionLabel], ConfusionMatrix]:
    swap_seed, b_seed, a_seed = seed.spawn(3)
    g = degree_preserving_randomize(graph, n_swaps, swap_seed) if randomize else graph
    balance = _balance(g)
    b_labels = majority_infer(g, "b", g.side_a, balance, b_seed)
    a_recovered = majority_infer(g, "a", b_labels, balance, a_seed)
    # only A users reachable by a B->A tie carry signal
    scored = {v for u, v in g.b_to_a}
    cm = evaluate({u: a_recovered[u] for u in sorted(scored)}, g.side_a)
    return b_labels, a_recovered, cm


def two_way_propagation(
    graph: BipartiteGraph,
    realizations: int = 100,
    rng_seed: int = 0,
    randomize: bool = False,
    n_swaps: int | None = None,
    executor: Executor | None = None,
) -> PropagationResult:
    """Infer B from true A labels, then A back from inferred B; score the recovered A labels."""
    if not graph.edges:
        raise DataError("bipartite graph has no edges")
    if realizations < 1:
        raise DataError("realizations must be >= 1")
    if not graph.b_to_a:
        raise DataError("no B->A ties to recover side A labels from")
    seeds = np.random.SeedSequence(rng_seed).spawn(realizations)
    if executor is None:
        runs = [_run_realization(graph, s, randomize, n_swaps) for s in seeds]
    else:
        runs = list(executor.map(lambda s: _run_realization(graph, s, randomize, n_swaps), seeds))

    accuracies = [cm.accuracy for _, _, cm in runs]
    rates = np.mean([cm.rates for _, _, cm in runs], axis=0)
    b_labels, a_recovered, first = runs[0]
    result = PropagationResult(
        b_labels={u: int(lbl) for u, lbl in b_labels.items()},
        a_recovered={u: int(lbl) for u, lbl in a_recovered.items()},
        a_accuracy=float(np.mean(accuracies)),
        accuracy_std=float(np.std(accuracies)),
        realizations=realizations,
        accuracies=accuracies,
        confusion_rates=rates.tolist(),
        scored_users=first.total,
        randomized=randomize,
        diagnostics=bipartite_diagnostics(graph),
    )
    logger.info("Crossnet: propagation realizations=%d randomized=%s accuracy=%.4f std=%.4f scored=%d",
                realizations, randomize, result.a_accuracy, result.accuracy_std, result.scored_users)
    return result


# --- Diagnostics and adapters ------------------------------------------------


def bipartite_diagnostics(graph: BipartiteGraph) -> dict[str, float]:
    edge_set = set(graph.edges)
    n_b = len(graph.side_b)
    reciprocal = sum(1 for u, v in graph.edges if (v, u) in edge_set)
    return {
        "bidirectional_fraction": reciprocal / len(edge_set) if edge_set else 0.0,
        "mean_b_in_degree": len(graph.a_to_b) / n_b if n_b else 0.0,
        "mean_b_out_degree": len(graph.b_to_a) / n_b if n_b else 0.0,
        "balance": _balance(graph) if graph.side_a else math.nan,
    }


def score_hidden_b(
    b_labels: Mapping[UserId, SubscriptionLabel], hidden: Mapping[UserId, SubscriptionLabel]
) -> ConfusionMatrix:
    """Direct B-side score; hidden labels exist only for generated corpora."""
    return evaluate({u: lbl for u, lbl in b_labels.items() if u in hidden}, hidden)


def bipartite_from_records(
    records: Iterable[CdrRecord],
    side_a_labels: Mapping[UserId, SubscriptionLabel],
    side_b: Iterable[UserId],
) -> BipartiteGraph:
    """Distinct directed cross-side ties from call and SMS records; same-side records are ignored."""
    b = frozenset(side_b)
    edges: set[tuple[UserId, UserId]] = set()
    skipped = 0
    for r in records:
        if (r.caller in side_a_labels and r.callee in b) or (r.caller in b and r.callee in side_a_labels):
            edges.add((r.caller, r.callee))
        else:
            skipped += 1
    if skipped:
        logger.info("Crossnet: ignored %d records not crossing the sides", skipped)
    return BipartiteGraph(
        side_a={u: SubscriptionLabel(lbl) for u, lbl in side_a_labels.items()},
        side_b=b,
        edges=tuple(sorted(edges)),
    )
