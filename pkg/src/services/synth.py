"""Seeded synthetic CDR corpora and A/B bipartite graphs with label homophily.

Every random stream derives from `SynthConfig.seed`:
- stream 0: label assignment of company users
- stream 1 + user index: one user's callees, call counts, durations and SMS
- stream 2: bipartite ties and hidden B labels
- stream 3: inter-company call records
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..exceptions import ConfigError
from .models import BipartiteGraph, CdrRecord, EventType, SubscriptionLabel, SynthConfig, UserId

logger = logging.getLogger(__name__)

_STREAM_LABELS = 0
_STREAM_USERS = 1
_STREAM_BIPARTITE = 2
_STREAM_CROSS = 3


@dataclass
class BipartiteSample:
    graph: BipartiteGraph
    hidden_b: dict[UserId, SubscriptionLabel]


@dataclass
class SynthCorpus:
    config: SynthConfig
    records: list[CdrRecord]
    truth: dict[UserId, SubscriptionLabel]
    out_degree: dict[UserId, int] = field(default_factory=dict)
    bipartite: BipartiteGraph | None = None
    hidden_b: dict[UserId, SubscriptionLabel] = field(default_factory=dict)
    inter_company_records: list[CdrRecord] = field(default_factory=list)


# --- Samplers ----------------------------------------------------------------


def _sample_degree(rng: np.random.Generator, mean: float, shape: str) -> int:
    if shape == "poisson":
        return 1 + int(rng.poisson(mean - 1.0))
    return int(rng.geometric(1.0 / mean))


def _sample_extra(rng: np.random.Generator, mean: float) -> int:
    """Geometric on {0, 1, ...} with the given mean."""
    if mean <= 0:
        return 0
    return int(rng.geometric(1.0 / (1.0 + mean))) - 1


def _duration(rng: np.random.Generator, mu: float, sigma: float) -> int:
    return max(1, int(round(rng.lognormal(mu, sigma))))


def check_feasible(config: SynthConfig) -> None:
    n_post = round(config.postpaid_fraction * config.n_users)
    population = {SubscriptionLabel.PREPAID: config.n_users - n_post, SubscriptionLabel.POSTPAID: n_post}
    for label, size in population.items():
        if size == 0:
            continue
        mean_k, mean_c = config.mean_degree(label), config.mean_calls(label)
        if mean_k < 1.0:
            raise ConfigError(f"{label.name.lower()} mean degree {mean_k} is below 1")
        if mean_k >= size:
            raise ConfigError(f"{label.name.lower()} mean degree {mean_k} >= class population {size}")
        if mean_c < mean_k:
            raise ConfigError(f"{label.name.lower()} mean calls {mean_c} below mean degree {mean_k}")
    if config.bipartite is not None:
        n_b = config.bipartite.n_b_users or config.n_users
        e_in = round(config.bipartite.mean_b_in_degree * n_b)
        if 2 * e_in > config.n_users * n_b:
            raise ConfigError("bipartite graph too dense for the requested sides")


def assign_labels(n_users: int, postpaid_fraction: float, rng: np.random.Generator) -> np.ndarray:
    labels = np.zeros(n_users, dtype=np.int8)
    n_post = round(postpaid_fraction * n_users)
    labels[rng.permutation(n_users)[:n_post]] = SubscriptionLabel.POSTPAID
    return labels


# --- Company network ---------------------------------------------------------


def _pick_callees(
    rng: np.random.Generator,
    me: int,
    label: int,
    k: int,
    members: list[np.ndarray],
    homophily: list[list[float]],
) -> list[int]:
    """k distinct callee indices; label mix follows the caller's homophily row."""
    chosen: set[int] = set()
    taken = [0, 0]
    own = [1 if label == c else 0 for c in (0, 1)]
    order: list[int] = []
    for _ in range(k):
        c = int(rng.random() < homophily[label][1])
        if len(members[c]) - own[c] - taken[c] <= 0:
            c = 1 - c
            if len(members[c]) - own[c] - taken[c] <= 0:
                break
        pool = members[c]
        while True:
            j = int(pool[rng.integers(len(pool))])
            if j != me and j not in chosen:
                break
        chosen.add(j)
        taken[c] += 1
        order.append(j)
    return order


def _user_records(
    config: SynthConfig,
    idx: int,
    ids: np.ndarray,
    labels: np.ndarray,
    members: list[np.ndarray],
) -> tuple[list[CdrRecord], int]:
    rng = np.random.default_rng([config.seed, _STREAM_USERS, idx])
    label = int(labels[idx])
    available = len(ids) - 1
    k = min(_sample_degree(rng, config.mean_degree(label), config.degree_shape), available)
    callees = _pick_callees(rng, idx, label, k, members, config.homophily)
    k = len(callees)
    if k == 0:
        return [], 0

    extra = _sample_extra(rng, config.mean_calls(label) - config.mean_degree(label))
    per_callee = 1 + rng.multinomial(extra, np.full(k, 1.0 / k))
    mu, sigma = config.duration_lognormal[label]
    start, end = config.window
    caller = int(ids[idx])
    records: list[CdrRecord] = []
    for j, n_calls in zip(callees, per_callee):
        callee = int(ids[j])
        stamps = rng.integers(start, end + 1, size=int(n_calls))
        for ts in stamps:
            records.append(CdrRecord(int(ts), EventType.CALL, _duration(rng, mu, sigma), caller, callee))
    n_sms = int(rng.poisson(config.sms_rate * int(per_callee.sum())))
    if n_sms:
        targets = rng.integers(k, size=n_sms)
        stamps = rng.integers(start, end + 1, size=n_sms)
        for t, ts in zip(targets, stamps):
            records.append(CdrRecord(int(ts), EventType.SMS, 0, caller, int(ids[callees[int(t)]])))
    return records, k


def generate_cdrs(config: SynthConfig) -> SynthCorpus:
    """Company corpus plus, when configured, the bipartite view and inter-company records."""
    check_feasible(config)
    n = config.n_users
    ids = np.arange(1, n + 1, dtype=np.int64)
    labels = assign_labels(n, config.postpaid_fraction, np.random.default_rng([config.seed, _STREAM_LABELS]))
    members = [np.flatnonzero(labels == c) for c in (0, 1)]

    records: list[CdrRecord] = []
    out_degree: dict[UserId, int] = {}
    for idx in range(n):
        user_records, k = _user_records(config, idx, ids, labels, members)
        records.extend(user_records)
        out_degree[int(ids[idx])] = k
    records.sort(key=lambda r: (r.timestamp, r.caller, r.callee, r.event_type.value, r.duration))
    truth = {int(ids[i]): SubscriptionLabel(int(labels[i])) for i in range(n)}
    corpus = SynthCorpus(config=config, records=records, truth=truth, out_degree=out_degree)
    logger.info("Synth: corpus users=%d postpaid=%d records=%d seed=%d",
                n, int(labels.sum()), len(records), config.seed)

    if config.bipartite is not None:
        sample = generate_bipartite(config, truth, out_degree)
        corpus.bipartite = sample.graph
        corpus.hidden_b = sample.hidden_b
        corpus.inter_company_records = inter_company_records(config, sample)
    return corpus


# --- Bipartite view ----------------------------------------------------------


def generate_bipartite(
    config: SynthConfig,
    truth_a: Mapping[UserId, SubscriptionLabel],
    activity: Mapping[UserId, int] | None = None,
) -> BipartiteSample:
    """Hidden-label B users tied to A users under the homophily matrix.

    B in-degree averages `mean_b_in_degree`; a `bidirectional_fraction` share of ties
    is reciprocated. A partners within a label are picked in proportion to `activity`
    (intra-company out-degree, floored at 1).
    """
    bcfg = config.bipartite
    if bcfg is None:
        raise ConfigError("bipartite generation needs a bipartite sub-config")
    rng = np.random.default_rng([config.seed, _STREAM_BIPARTITE])
    n_b = bcfg.n_b_users or config.n_users
    first_b = max(truth_a) + 1 if truth_a else 1
    b_ids = np.arange(first_b, first_b + n_b, dtype=np.int64)
    b_labels = assign_labels(n_b, config.postpaid_fraction, rng)

    a_users = sorted(truth_a)
    by_label: list[np.ndarray] = []
    cum_weights: list[np.ndarray] = []
    for c in (0, 1):
        pool = np.array([u for u in a_users if int(truth_a[u]) == c], dtype=np.int64)
        w = np.array([max(1, (activity or {}).get(int(u), 1)) for u in pool], dtype=np.float64)
        by_label.append(pool)
        cum_weights.append(np.cumsum(w) / w.sum() if len(w) else w)
    if not len(by_label[0]) and not len(by_label[1]):
        raise ConfigError("bipartite generation needs labeled A users")

    e_in = round(bcfg.mean_b_in_degree * n_b)
    m_bi = round(bcfg.bidirectional_fraction * e_in)
    m_uni = e_in - m_bi
    if 2 * e_in > len(a_users) * n_b:
        raise ConfigError("bipartite graph too dense for the requested sides")

    pairs: set[tuple[int, int]] = set()

    def draw_tie() -> tuple[int, int]:
        while True:
            j = int(rng.integers(n_b))
            row = config.homophily[int(b_labels[j])]
            c = int(rng.random() < row[1])
            if not len(by_label[c]):
                c = 1 - c
            k = int(np.searchsorted(cum_weights[c], rng.random(), side="right"))
            a = int(by_label[c][min(k, len(by_label[c]) - 1)])
            b = int(b_ids[j])
            if (a, b) not in pairs:
                pairs.add((a, b))
                return a, b

    edges: list[tuple[int, int]] = []
    for _ in range(m_bi):
        a, b = draw_tie()
        edges += [(a, b), (b, a)]
    for _ in range(m_uni):
        a, b = draw_tie()
        edges.append((a, b))
    for _ in range(m_uni):
        a, b = draw_tie()
        edges.append((b, a))

    graph = BipartiteGraph(
        side_a={u: SubscriptionLabel(truth_a[u]) for u in a_users},
        side_b=frozenset(int(b) for b in b_ids),
        edges=tuple(sorted(edges)),
    )
    hidden = {int(b_ids[j]): SubscriptionLabel(int(b_labels[j])) for j in range(n_b)}
    logger.info("Synth: bipartite n_b=%d edges=%d reciprocal_ties=%d", n_b, len(edges), m_bi)
    return BipartiteSample(graph=graph, hidden_b=hidden)


def inter_company_records(config: SynthConfig, sample: BipartiteSample) -> list[CdrRecord]:
    """Call records along every bipartite tie, drawn with the caller's per-tie activity."""
    rng = np.random.default_rng([config.seed, _STREAM_CROSS])
    start, end = config.window
    graph = sample.graph
    records: list[CdrRecord] = []
    for caller, callee in graph.edges:
        label = int(graph.side_a[caller]) if caller in graph.side_a else int(sample.hidden_b[caller])
        per_tie = config.mean_calls(label) / config.mean_degree(label)
        n_calls = 1 + _sample_extra(rng, per_tie - 1.0)
        mu, sigma = config.duration_lognormal[label]
        for ts in rng.integers(start, end + 1, size=n_calls):
            records.append(CdrRecord(int(ts), EventType.CALL, _duration(rng, mu, sigma), caller, callee))
    records.sort(key=lambda r: (r.timestamp, r.caller, r.callee, r.duration))
    logger.info("Synth: inter-company records=%d", len(records))
    return records
