from __future__ import annotations

import logging
from collections import defaultdict
from typing import Callable, Iterable, Iterator, Mapping

import networkx as nx

from ..exceptions import CdrParseError, DataError
from .models import (
    MAX_USER_ID,
    CdrFormat,
    CdrRecord,
    EdgeStats,
    EventType,
    FilterPolicy,
    ParseReport,
    SubscriptionLabel,
    UserId,
)
from .storage import open_binary, open_text

logger = logging.getLogger(__name__)

MAX_MALFORMED_FRACTION = 0.01
_LOGGED_MALFORMED = 10

EdgeMap = dict[tuple[UserId, UserId], EdgeStats]


class CallGraph:
    """Directed weighted communication graph, frozen after construction.

    Edge attributes: call_count, total_call_seconds, sms_count, sum_sq_call_seconds.
    """

    def __init__(self, graph: nx.DiGraph) -> None:
        self._g = nx.freeze(graph)

    def __contains__(self, user: UserId) -> bool:
        return user in self._g

    def number_of_nodes(self) -> int:
        return self._g.number_of_nodes()

    def number_of_edges(self) -> int:
        return self._g.number_of_edges()

    def edges(self) -> Iterator[tuple[UserId, UserId, EdgeStats]]:
        for u, v, data in self._g.edges(data=True):
            yield u, v, EdgeStats(**data)

    def outgoing(self, user: UserId) -> Iterator[tuple[UserId, EdgeStats]]:
        for v, data in self._g.succ[user].items():
            yield v, EdgeStats(**data)

    def out_degree(self, user: UserId) -> int:
        return len(self._g.succ[user])

    def neighbors(self, user: UserId) -> set[UserId]:
        """Union of in- and out-neighbours."""
        return set(self._g.succ[user]) | set(self._g.pred[user])


def _unsigned(text: str, line_no: int) -> int:
    if not (text.isascii() and text.isdigit()):
        raise CdrParseError(f"field {text!r} is not an unsigned integer", line_no)
    return int(text)


def _decode(raw: bytes, line_no: int) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        raise CdrParseError("invalid UTF-8", line_no)


def parse_cdr_line(line: str, line_no: int, fmt: CdrFormat) -> CdrRecord:
    parts = line.strip().split(",")
    if len(parts) != 5:
        raise CdrParseError(f"expected 5 fields, got {len(parts)}", line_no)
    ts_s, kind_s, dur_s, caller_s, callee_s = (p.strip() for p in parts)
    timestamp = _unsigned(ts_s, line_no)
    duration = _unsigned(dur_s, line_no)
    caller = _unsigned(caller_s, line_no)
    callee = _unsigned(callee_s, line_no)
    try:
        event_type = EventType(kind_s.lower())
    except ValueError:
        raise CdrParseError(f"unknown event type {kind_s!r}", line_no)
    if fmt.window is not None and not fmt.window[0] <= timestamp <= fmt.window[1]:
        raise CdrParseError("timestamp outside observation window", line_no)
    if caller > MAX_USER_ID or callee > MAX_USER_ID:
        raise CdrParseError("user id outside unsigned 64-bit range", line_no)
    try:
        return CdrRecord(timestamp, event_type, duration, caller, callee)
    except ValueError as e:
        raise CdrParseError(str(e), line_no)


def parse_cdr_file(path, fmt: CdrFormat | None = None, report: ParseReport | None = None) -> Iterator[CdrRecord]:
    """Yield records in file order, skipping (and reporting) malformed lines.

    Raises DataError once the stream is exhausted if more than 1% of lines were malformed.
    """
    fmt = fmt or CdrFormat()
    report = report if report is not None else ParseReport()
    with open_binary(path) as f:
        for line_no, raw in enumerate(f, start=1):
            if line_no == 1 and fmt.has_header:
                continue
            if not raw.strip():
                continue
            report.lines_read += 1
            try:
                record = parse_cdr_line(_decode(raw, line_no), line_no, fmt)
            except CdrParseError as e:
                report.malformed.append((line_no, e.reason))
                if len(report.malformed) <= _LOGGED_MALFORMED:
                    logger.warning("CDR: skip %s:%d (%s)", path, line_no, e.reason)
                continue
            report.records += 1
            yield record
    if report.malformed_fraction > MAX_MALFORMED_FRACTION:
        raise DataError(
            f"{len(report.malformed)} of {report.lines_read} lines malformed in {path}; "
            f"wrong format? (first at line {report.malformed[0][0]}: {report.malformed[0][1]})"
        )
    logger.info("CDR: parsed %s records=%d malformed=%d", path, report.records, len(report.malformed))


def load_cdr_file(path, fmt: CdrFormat | None = None) -> tuple[list[CdrRecord], ParseReport]:
    report = ParseReport()
    records = list(parse_cdr_file(path, fmt, report))
    return records, report


def write_cdr_file(records: Iterable[CdrRecord], path) -> int:
    n = 0
    with open_text(path, "w") as f:
        for r in records:
            f.write(f"{r.timestamp},{r.event_type.value},{r.duration},{r.caller},{r.callee}\n")
            n += 1
    logger.info("CDR: wrote %s records=%d", path, n)
    return n


def outgoing_call_seconds(records: Iterable[CdrRecord]) -> dict[UserId, int]:
    totals: dict[UserId, int] = defaultdict(int)
    for r in records:
        if r.is_call:
            totals[r.caller] += r.duration
    return dict(totals)


def filter_users(records: Iterable[CdrRecord], policy: FilterPolicy | None = None) -> set[UserId]:
    """Users whose total outgoing call duration lies in the policy's closed interval."""
    policy = policy or FilterPolicy()
    totals = outgoing_call_seconds(records)
    kept = {u for u, secs in totals.items() if policy.keeps(secs)}
    logger.info("CDR: filter kept=%d of callers=%d policy=[%d, %d]", len(kept), len(totals),
                policy.min_total_call_seconds, policy.max_total_call_seconds)
    return kept


def aggregate_edges(records: Iterable[CdrRecord], keep: Callable[[UserId, UserId], bool]) -> EdgeMap:
    edges: EdgeMap = {}
    for r in records:
        if not keep(r.caller, r.callee):
            continue
        stats = edges.get((r.caller, r.callee))
        if stats is None:
            stats = edges[(r.caller, r.callee)] = EdgeStats()
        stats.add(r)
    return edges


def merge_edge_maps(parts: Iterable[EdgeMap]) -> EdgeMap:
    """Sum partial edge aggregates; order of parts does not matter."""
    merged: EdgeMap = {}
    for part in parts:
        for key, stats in part.items():
            cur = merged.get(key)
            if cur is None:
                cur = merged[key] = EdgeStats()
            cur.merge(stats)
    return merged


def graph_from_edges(edges: EdgeMap, nodes: Iterable[UserId]) -> CallGraph:
    g = nx.DiGraph()
    g.add_nodes_from(sorted(nodes))
    for (u, v) in sorted(edges):
        g.add_edge(u, v, **edges[(u, v)].as_attrs())
    return CallGraph(g)


def build_call_graph(
    records: Iterable[CdrRecord],
    kept_users: set[UserId],
    keep: Callable[[UserId, UserId], bool] | None = None,
) -> CallGraph:
    """One edge per ordered interacting pair, restricted to kept endpoints by default.

    Nodes and edges are inserted in sorted order so the graph does not depend on record order.
    """
    if keep is None:
        def keep(u: UserId, v: UserId) -> bool:
            return u in kept_users and v in kept_users
    edges = aggregate_edges(records, keep)
    graph = graph_from_edges(edges, kept_users)
    logger.info("CDR: graph nodes=%d edges=%d", graph.number_of_nodes(), graph.number_of_edges())
    return graph


def call_mix_matrix(graph: CallGraph, labels: Mapping[UserId, SubscriptionLabel]) -> list[list[float]]:
    """Row-normalised share of calls by (caller label, callee label)."""
    counts = [[0, 0], [0, 0]]
    for u, v, stats in graph.edges():
        lu, lv = labels.get(u), labels.get(v)
        if lu is None or lv is None:
            continue
        counts[int(lu)][int(lv)] += stats.call_count
    rows: list[list[float]] = []
    for row in counts:
        total = sum(row)
        rows.append([c / total for c in row] if total else [0.0, 0.0])
    return rows


def check_graph_invariants(graph: CallGraph) -> None:
    for u, v, stats in graph.edges():
        if u == v:
            raise DataError(f"self-loop on {u}")
        if stats.call_count + stats.sms_count <= 0:
            raise DataError(f"edge ({u}, {v}) carries no events")
