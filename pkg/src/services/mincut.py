from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import replace
from typing import Iterable, Literal, Mapping, Sequence

import networkx as nx
import numpy as np

from ..exceptions import ConfigError, DataError, InvariantViolation, ModelError
from .cdr import CallGraph
from .models import (
    PROB_FLOOR,
    FlowNetwork,
    LabelingProblem,
    LabelingSolution,
    SubscriptionLabel,
    UserId,
)

logger = logging.getLogger(__name__)

SmoothnessWeight = Literal["degree", "calls", "duration"]

BRUTE_FORCE_MAX_NODES = 20
_BRUTE_FORCE_CHUNK = 1 << 16
_DUALITY_RTOL = 1e-9

Posterior = tuple[float, float]


# --- Cost terms --------------------------------------------------------------


def data_cost(p: Posterior) -> tuple[float, float]:
    """Negative natural-log posteriors (D(prepaid), D(postpaid))."""
    p0, p1 = float(p[0]), float(p[1])
    lo, hi = PROB_FLOOR * (1 - 1e-9), 1.0 - PROB_FLOOR * (1 - 1e-9)
    if not (lo <= p0 <= hi and lo <= p1 <= hi):
        raise ModelError(f"posterior {p!r} outside the clamp range")
    return -math.log(p0), -math.log(p1)


def smoothness_cost(f_u: int, f_v: int, k_out_u: float, k_out_v: float) -> float:
    """Disagreement cost of a social edge (u, v); the postpaid endpoint's k_out normalises it."""
    if int(f_u) == int(f_v):
        return 0.0
    k = k_out_u if int(f_u) == SubscriptionLabel.POSTPAID else k_out_v
    if k <= 0:
        raise DataError("smoothness cost needs k_out >= 1 on the postpaid endpoint")
    return 1.0 / k


def _edge_weights(problem: LabelingProblem, u: int, v: int) -> tuple[float, float]:
    """(w(1,0), w(0,1)) of social edge (u, v); a zero k_out on v drops the second term."""
    k_u, k_v = problem.k_out[u], problem.k_out[v]
    return 1.0 / k_u, (1.0 / k_v if k_v > 0 else 0.0)


def labeling_energy(problem: LabelingProblem, labels: Sequence[int]) -> float:
    if len(labels) != problem.n_nodes:
        raise DataError("one label per node expected")
    energy = 0.0
    for (d0, d1), f in zip(problem.data_cost, labels):
        energy += d1 if int(f) == SubscriptionLabel.POSTPAID else d0
    for u, v in problem.social_edges:
        f_u, f_v = int(labels[u]), int(labels[v])
        if f_u == f_v:
            continue
        w10, w01 = _edge_weights(problem, u, v)
        w = w10 if f_u == SubscriptionLabel.POSTPAID else w01
        if w == 0.0:
            continue
        energy += problem.lam * w
    return energy


# --- Reduction ---------------------------------------------------------------


def build_labeling_network(problem: LabelingProblem) -> FlowNetwork:
    """Source side is postpaid, sink side prepaid.

    Arc s->u carries D_u(0) (cut when u is prepaid), u->t carries D_u(1).
    Social edge (u, v) becomes u->v at lam/k_out(u) and v->u at lam/k_out(v).
    """
    n = problem.n_nodes
    s, t = n, n + 1
    lam_finite = math.isfinite(problem.lam)

    social: list[tuple[int, int, float]] = []
    if problem.lam > 0:
        for u, v in problem.social_edges:
            w10, w01 = _edge_weights(problem, u, v)
            social.append((u, v, w10))
            if w01 > 0:
                social.append((v, u, w01))

    finite_total = sum(d0 + d1 for d0, d1 in problem.data_cost)
    if lam_finite:
        finite_total += sum(problem.lam * w for _, _, w in social)
    infinity = finite_total + 1.0
    uses_sentinel = bool(problem.fixed) or not lam_finite

    net = FlowNetwork(n_nodes=n + 2, source=s, sink=t, infinity=infinity if uses_sentinel else None)
    for i, (d0, d1) in enumerate(problem.data_cost):
        fixed = problem.fixed.get(i)
        net.add_arc(s, i, infinity if fixed == SubscriptionLabel.POSTPAID else d0)
        net.add_arc(i, t, infinity if fixed == SubscriptionLabel.PREPAID else d1)
    for u, v, w in social:
        net.add_arc(u, v, problem.lam * w if lam_finite else infinity)
    return net


# --- Push-relabel ------------------------------------------------------------


class PushRelabelSolver:
    """Highest-label push-relabel with gap relabeling and periodic global relabeling.

    Arcs live in flat lists; arc `a` and `a ^ 1` are mutual reverses. Heights below n
    measure distance to the sink, heights in [n, 2n) distance back to the source.
    """

    def __init__(self, net: FlowNetwork) -> None:
        self.n = net.n_nodes
        self.s = net.source
        self.t = net.sink
        self.head: list[int] = []
        self.res: list[float] = []
        self.cap: list[float] = []
        self.adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v, c in net.arcs():
            if u == v:
                continue
            a = len(self.head)
            self.head += (v, u)
            self.res += (c, 0.0)
            self.cap += (c, 0.0)
            self.adj[u].append(a)
            self.adj[v].append(a + 1)

        n = self.n
        self.height = [0] * n
        self.excess = [0.0] * n
        self.current = [0] * n
        self.levels: list[set[int]] = [set() for _ in range(n)]
        self.active: list[list[int]] = [[] for _ in range(2 * n + 1)]
        self.max_active = -1
        self.relabels = 0
        self.pushes = 0
        self._since_global = 0

    # state helpers

    def _activate(self, v: int) -> None:
        h = self.height[v]
        if h < 2 * self.n:
            self.active[h].append(v)
            if h > self.max_active:
                self.max_active = h

    def _global_relabel(self) -> None:
        n, s, t = self.n, self.s, self.t
        head, res, adj = self.head, self.res, self.adj
        dead = 2 * n
        height = [dead] * n
        height[t] = 0
        height[s] = n
        for root in (t, s):
            queue = deque([root])
            while queue:
                v = queue.popleft()
                hv = height[v] + 1
                for a in adj[v]:
                    w = head[a]
                    if height[w] == dead and res[a ^ 1] > 0:
                        height[w] = hv
                        queue.append(w)
        self.height = height
        self.current = [0] * n
        self.levels = [set() for _ in range(n)]
        self.active = [[] for _ in range(2 * n + 1)]
        self.max_active = -1
        for v in range(n):
            if v == s or v == t:
                continue
            if height[v] < n:
                self.levels[height[v]].add(v)
            if self.excess[v] > 0:
                self._activate(v)
        self._since_global = 0

    def _gap(self, level: int) -> None:
        n = self.n
        lifted = 0
        for h in range(level + 1, n):
            nodes = self.levels[h]
            if not nodes:
                continue
            for v in nodes:
                self.height[v] = n + 1
                self.current[v] = 0
                lifted += 1
                if self.excess[v] > 0:
                    self._activate(v)
            self.levels[h] = set()
        logger.debug("PushRelabel: gap at level=%d lifted=%d", level, lifted)

    def _relabel(self, u: int) -> None:
        n = self.n
        head, res, height = self.head, self.res, self.height
        best_h, best_i = 2 * n - 1, 0
        found = False
        for i, a in enumerate(self.adj[u]):
            if res[a] > 0:
                h = height[head[a]]
                if not found or h < best_h:
                    best_h, best_i, found = h, i, True
        old = height[u]
        new = min(best_h + 1, 2 * n) if found else 2 * n
        if old < n:
            self.levels[old].discard(u)
        height[u] = new
        self.current[u] = best_i
        if new < n:
            self.levels[new].add(u)
        self.relabels += 1
        self._since_global += 1
        if 0 < old < n and not self.levels[old]:
            self._gap(old)

    def _discharge(self, u: int) -> None:
        s, t = self.s, self.t
        head, res, excess, height = self.head, self.res, self.excess, self.height
        adj_u = self.adj[u]
        dead = 2 * self.n
        while excess[u] > 0:
            i = self.current[u]
            if i >= len(adj_u):
                self._relabel(u)
                height = self.height
                if height[u] >= dead:
                    # nowhere to send the remaining excess
                    break
                continue
            a = adj_u[i]
            r = res[a]
            v = head[a]
            if r > 0 and height[u] == height[v] + 1:
                d = excess[u] if excess[u] < r else r
                res[a] = r - d
                res[a ^ 1] += d
                excess[u] -= d
                if excess[v] <= 0 and v != s and v != t:
                    excess[v] += d
                    self._activate(v)
                else:
                    excess[v] += d
                self.pushes += 1
                if excess[u] <= 0:
                    break
            self.current[u] = i + 1

    # public

    def solve(self) -> tuple[float, list[bool]]:
        n, s = self.n, self.s
        head, res = self.head, self.res
        for a in self.adj[s]:
            d = res[a]
            if d > 0:
                res[a] = 0.0
                res[a ^ 1] += d
                self.excess[head[a]] += d
                self.excess[s] -= d
        self._global_relabel()

        while True:
            if self._since_global >= n:
                self._global_relabel()
            b = self.max_active
            active = self.active
            while b >= 0 and not active[b]:
                b -= 1
            if b < 0:
                break
            self.max_active = b
            u = active[b].pop()
            if self.height[u] != b or self.excess[u] <= 0:
                continue
            self._discharge(u)

        stranded = sum(1 for v in range(n) if v not in (s, self.t) and self.excess[v] > 0)
        if stranded:
            logger.warning("PushRelabel: %d nodes kept excess after termination", stranded)
        flow = self.excess[self.t]
        return flow, self.source_side()

    def source_side(self) -> list[bool]:
        """Nodes reachable from s in the residual graph."""
        seen = [False] * self.n
        seen[self.s] = True
        queue = deque([self.s])
        head, res, adj = self.head, self.res, self.adj
        while queue:
            v = queue.popleft()
            for a in adj[v]:
                w = head[a]
                if not seen[w] and res[a] > 0:
                    seen[w] = True
                    queue.append(w)
        return seen


def _sentinel_path(net: FlowNetwork) -> bool:
    if net.infinity is None:
        return False
    g = nx.DiGraph()
    g.add_nodes_from((net.source, net.sink))
    g.add_edges_from((u, v) for u, v, c in net.arcs() if c >= net.infinity)
    return nx.has_path(g, net.source, net.sink)


def cut_capacity(net: FlowNetwork, source_side: Sequence[bool]) -> float:
    return sum(c for u, v, c in net.arcs() if source_side[u] and not source_side[v])


def push_relabel_maxflow(net: FlowNetwork) -> tuple[float, list[bool]]:
    """Maximum s-t flow value and the source side of a minimum cut."""
    if _sentinel_path(net):
        raise DataError("contradictory fixed labels: source and sink joined by infinite arcs")
    solver = PushRelabelSolver(net)
    flow, side = solver.solve()
    cut = cut_capacity(net, side)
    if abs(flow - cut) > _DUALITY_RTOL * max(1.0, abs(cut)):
        raise InvariantViolation(f"max flow {flow!r} differs from cut capacity {cut!r}")
    logger.debug("PushRelabel: nodes=%d arcs=%d flow=%.6f pushes=%d relabels=%d",
                 net.n_nodes, net.n_arcs, flow, solver.pushes, solver.relabels)
    return flow, side


# --- Labeling ----------------------------------------------------------------


def solve_labeling(problem: LabelingProblem) -> LabelingSolution:
    net = build_labeling_network(problem)
    flow, side = push_relabel_maxflow(net)
    n = problem.n_nodes
    labels = [SubscriptionLabel.POSTPAID if side[i] else SubscriptionLabel.PREPAID for i in range(n)]
    for i, fixed in problem.fixed.items():
        if labels[i] != fixed:
            raise InvariantViolation(f"fixed node {problem.nodes[i]} lost its label")
    energy = labeling_energy(problem, labels)
    if abs(energy - flow) > _DUALITY_RTOL * max(1.0, abs(flow)):
        raise InvariantViolation(f"cut capacity {flow!r} differs from labeling energy {energy!r}")
    logger.info("Labeling: solved nodes=%d edges=%d lambda=%s flow=%.4f energy=%.4f postpaid=%d",
                n, len(problem.social_edges), problem.lam, flow, energy, sum(labels))
    return LabelingSolution(labels=labels, energy=energy, flow_value=flow, source_side=side[:n])


def brute_force_labeling(problem: LabelingProblem) -> LabelingSolution:
    """Exhaustive minimiser; on ties the lowest enumeration index wins (label 0 first)."""
    n = problem.n_nodes
    if n > BRUTE_FORCE_MAX_NODES:
        raise DataError(f"brute force is limited to {BRUTE_FORCE_MAX_NODES} nodes, got {n}")
    d = np.asarray(problem.data_cost, dtype=np.float64).reshape(n, 2)
    shifts = np.arange(n, dtype=np.int64)
    best_e, best_idx = math.inf, -1
    for start in range(0, 1 << n, _BRUTE_FORCE_CHUNK):
        idx = np.arange(start, min(start + _BRUTE_FORCE_CHUNK, 1 << n), dtype=np.int64)
        bits = ((idx[:, None] >> shifts) & 1).astype(bool)
        energy = np.where(bits, d[:, 1], d[:, 0]).sum(axis=1)
        if problem.lam > 0:
            for u, v in problem.social_edges:
                w10, w01 = _edge_weights(problem, u, v)
                fu, fv = bits[:, u], bits[:, v]
                energy = energy + np.where(fu & ~fv, problem.lam * w10, 0.0)
                if w01 > 0:
                    energy = energy + np.where(~fu & fv, problem.lam * w01, 0.0)
        for i, lbl in problem.fixed.items():
            energy = np.where(bits[:, i] == bool(lbl), energy, math.inf)
        j = int(np.argmin(energy))
        if energy[j] < best_e:
            best_e, best_idx = float(energy[j]), int(idx[j])
    if best_idx < 0:
        raise DataError("no finite-energy labeling satisfies the fixed labels")
    labels = [SubscriptionLabel((best_idx >> i) & 1) for i in range(n)]
    energy = labeling_energy(problem, labels)
    return LabelingSolution(labels=labels, energy=energy, flow_value=energy)


# --- Pruning and problem assembly --------------------------------------------


def _check_tau(name: str, tau: float) -> None:
    if not 0.5 < tau <= 1.0:
        raise ConfigError(f"{name} must lie in (0.5, 1], got {tau}")


def prune_fix_labels(
    posteriors: Mapping[UserId, Posterior],
    graph: CallGraph,
    tau1: float = 0.85,
    tau2: float = 0.65,
) -> dict[UserId, SubscriptionLabel]:
    """Fix confident users whose neighbourhood agrees; neighbours are in- and out-neighbours."""
    _check_tau("tau1", tau1)
    _check_tau("tau2", tau2)
    fixed: dict[UserId, SubscriptionLabel] = {}
    for u, p in posteriors.items():
        for label in SubscriptionLabel:
            if not p[label] > tau1:
                continue
            neigh = [posteriors[v][label] for v in graph.neighbors(u) if v in posteriors] if u in graph else []
            if neigh and sum(neigh) / len(neigh) > tau2:
                fixed[u] = label
            break
    logger.info("Pruning: fixed=%d of %d (tau1=%.2f tau2=%.2f)", len(fixed), len(posteriors), tau1, tau2)
    return fixed


def _normaliser(graph: CallGraph, user: UserId, weight: SmoothnessWeight) -> float:
    k = graph.out_degree(user)
    if weight == "degree" or k == 0:
        return float(k)
    if weight == "calls":
        value = sum(stats.call_count for _, stats in graph.outgoing(user))
    else:
        value = sum(stats.total_call_seconds for _, stats in graph.outgoing(user))
    # sms-only senders have ties but no call volume
    return float(value) if value > 0 else 1.0


def build_problem(
    graph: CallGraph,
    users: Iterable[UserId],
    posteriors: Mapping[UserId, Posterior],
    lam: float,
    fixed: Mapping[UserId, SubscriptionLabel] | None = None,
    weight: SmoothnessWeight = "degree",
) -> LabelingProblem:
    nodes = list(users)
    index = {u: i for i, u in enumerate(nodes)}
    edges: list[tuple[int, int]] = []
    for u in nodes:
        iu = index[u]
        for v, _ in graph.outgoing(u):
            iv = index.get(v)
            if iv is not None:
                edges.append((iu, iv))
    problem = LabelingProblem(
        nodes=nodes,
        data_cost=[data_cost(posteriors[u]) for u in nodes],
        social_edges=edges,
        k_out=[_normaliser(graph, u, weight) for u in nodes],
        lam=lam,
        fixed={index[u]: SubscriptionLabel(lbl) for u, lbl in (fixed or {}).items() if u in index},
    )
    logger.info("Labeling: problem nodes=%d edges=%d fixed=%d weight=%s", problem.n_nodes,
                len(edges), len(problem.fixed), weight)
    return problem


def connected_components(problem: LabelingProblem) -> list[set[int]]:
    g = nx.Graph()
    g.add_nodes_from(range(problem.n_nodes))
    g.add_edges_from(problem.social_edges)
    return [set(c) for c in nx.connected_components(g)]


# --- Lambda selection --------------------------------------------------------


def log_grid(lo: float, hi: float, steps: int) -> list[float]:
    if not (0 < lo <= hi) or steps < 1:
        raise ConfigError(f"bad lambda grid {lo}:{hi}:{steps}")
    if steps == 1:
        return [float(lo)]
    return [float(x) for x in np.geomspace(lo, hi, steps)]


def lambda_sweep(
    problem: LabelingProblem, grid: Iterable[float], truth: Mapping[int, SubscriptionLabel]
) -> list[dict[str, float]]:
    """One row per lambda: accuracy over `truth` (node index -> label), energy, fixed share."""
    if not truth:
        raise DataError("lambda sweep needs labeled nodes to score")
    rows: list[dict[str, float]] = []
    fixed_fraction = len(problem.fixed) / problem.n_nodes if problem.n_nodes else 0.0
    for lam in sorted(grid):
        solution = solve_labeling(replace(problem, lam=lam))
        hits = sum(1 for i, lbl in truth.items() if solution.labels[i] == int(lbl))
        rows.append({
            "lambda": lam,
            "accuracy": hits / len(truth),
            "energy": solution.energy,
            "fixed_fraction": fixed_fraction,
        })
    return rows


def tune_lambda(
    problem: LabelingProblem, grid: Iterable[float], validation: Mapping[int, SubscriptionLabel]
) -> tuple[float, list[dict[str, float]]]:
    """Grid lambda with the best validation accuracy; ties go to the smaller lambda."""
    rows = lambda_sweep(problem, grid, validation)
    best = rows[0]
    for row in rows[1:]:
        if row["accuracy"] > best["accuracy"]:
            best = row
    logger.info("Labeling: tuned lambda=%.4g validation_accuracy=%.4f over %d values",
                best["lambda"], best["accuracy"], len(rows))
    return best["lambda"], rows
