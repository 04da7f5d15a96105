import math
import random
from dataclasses import replace

import networkx as nx
import pytest
from networkx.algorithms.flow import edmonds_karp

from src.exceptions import ConfigError, DataError, ModelError
from src.services.cdr import build_call_graph
from src.services.mincut import (
    brute_force_labeling,
    build_labeling_network,
    build_problem,
    connected_components,
    data_cost,
    labeling_energy,
    lambda_sweep,
    log_grid,
    prune_fix_labels,
    push_relabel_maxflow,
    smoothness_cost,
    solve_labeling,
    tune_lambda,
)
from src.services.models import (
    PROB_FLOOR,
    CdrRecord,
    EventType,
    FlowNetwork,
    LabelingProblem,
    SubscriptionLabel,
)

PRE, POST = SubscriptionLabel.PREPAID, SubscriptionLabel.POSTPAID
CAPACITY_GRID = [0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 8.0]


def network(n_nodes, arcs, source=0, sink=None):
    net = FlowNetwork(n_nodes=n_nodes, source=source, sink=n_nodes - 1 if sink is None else sink)
    for u, v, c in arcs:
        net.add_arc(u, v, c)
    return net


def random_network(rng, n_nodes, density):
    pairs = [(u, v) for u in range(n_nodes) for v in range(n_nodes) if u != v and rng.random() < density]
    return network(n_nodes, [(u, v, rng.choice(CAPACITY_GRID)) for u, v in pairs])


def sparse_network(rng, n_nodes, mean_degree):
    pairs = set()
    for _ in range(round(mean_degree * n_nodes)):
        u, v = rng.randrange(n_nodes), rng.randrange(n_nodes)
        if u != v:
            pairs.add((u, v))
    return network(n_nodes, [(u, v, rng.choice(CAPACITY_GRID)) for u, v in sorted(pairs)])


def reference_flow(net):
    g = nx.DiGraph()
    g.add_nodes_from(range(net.n_nodes))
    for u, v, c in net.arcs():
        g.add_edge(u, v, capacity=c)
    return nx.maximum_flow_value(g, net.source, net.sink, flow_func=edmonds_karp)


def random_problem(rng, n, lam, n_fixed=0):
    edges = sorted({(u, v) for u in range(n) for v in range(n) if u != v and rng.random() < 0.3})
    out_deg = [sum(1 for a, _ in edges if a == u) for u in range(n)]
    posts = [rng.uniform(0.02, 0.98) for _ in range(n)]
    fixed = {i: SubscriptionLabel(rng.randint(0, 1)) for i in rng.sample(range(n), n_fixed)}
    return LabelingProblem(
        nodes=list(range(100, 100 + n)),
        data_cost=[data_cost((1.0 - p, p)) for p in posts],
        social_edges=edges,
        k_out=[float(max(1, k)) for k in out_deg],
        lam=lam,
        fixed=fixed,
    )


def call(u, v, dur=10):
    return CdrRecord(0, EventType.CALL, dur, u, v)


# --- max flow


def test_five_arc_example_flow():
    # s=0, a=1, b=2, t=3
    net = network(4, [(0, 1, 3), (0, 2, 2), (1, 2, 1), (1, 3, 2), (2, 3, 3)])

    flow, side = push_relabel_maxflow(net)

    assert flow == 5
    assert side[0] and not side[3]


def test_single_arc_and_disconnected_networks():
    assert push_relabel_maxflow(network(2, [(0, 1, 4.5)]))[0] == 4.5
    assert push_relabel_maxflow(network(4, [(0, 1, 3.0), (2, 3, 3.0)]))[0] == 0.0


def test_push_relabel_matches_edmonds_karp_on_random_networks():
    rng = random.Random(2024)
    for _ in range(150):
        net = random_network(rng, rng.randint(2, 30), rng.choice([0.1, 0.2, 0.4]))

        flow, _ = push_relabel_maxflow(net)

        assert flow == pytest.approx(reference_flow(net), abs=1e-9)


@pytest.mark.slow
def test_push_relabel_matches_edmonds_karp_up_to_200_nodes():
    rng = random.Random(2025)
    for trial in range(2000):
        net = sparse_network(rng, rng.randint(2, 200), rng.choice([1.5, 3.0, 6.0]))

        flow, _ = push_relabel_maxflow(net)

        assert flow == pytest.approx(reference_flow(net), abs=1e-9), trial


def test_push_relabel_handles_dense_layered_network():
    rng = random.Random(5)
    layers = [list(range(1 + 10 * i, 11 + 10 * i)) for i in range(4)]
    arcs = [(0, v, 10.0) for v in layers[0]] + [(v, 41, 10.0) for v in layers[-1]]
    for left, right in zip(layers, layers[1:]):
        arcs += [(u, v, rng.choice(CAPACITY_GRID)) for u in left for v in right]
    net = network(42, arcs)

    assert push_relabel_maxflow(net)[0] == pytest.approx(reference_flow(net), abs=1e-9)


# --- cost terms


def test_data_cost_values():
    d0, d1 = data_cost((0.5, 0.5))
    assert d0 == d1 == pytest.approx(math.log(2))

    d0, d1 = data_cost((0.9, 0.1))
    assert (d0, d1) == pytest.approx((0.10536, 2.30259), abs=1e-5)

    assert data_cost((PROB_FLOOR, 1 - PROB_FLOOR))[0] == pytest.approx(23.02585, abs=1e-5)


def test_data_cost_rejects_unclamped_posteriors():
    with pytest.raises(ModelError):
        data_cost((0.0, 1.0))


def test_smoothness_cost_values():
    assert smoothness_cost(0, 0, 3, 5) == 0.0
    assert smoothness_cost(1, 1, 3, 5) == 0.0
    assert smoothness_cost(1, 0, 4, 2) == 0.25
    assert smoothness_cost(0, 1, 4, 2) == 0.5


def test_labeling_network_arcs():
    # Arrange: two nodes, one social edge (0 -> 1)
    problem = LabelingProblem(
        nodes=[7, 9],
        data_cost=[(1.0, 2.0), (3.0, 0.5)],
        social_edges=[(0, 1)],
        k_out=[2.0, 4.0],
        lam=8.0,
    )

    # Act
    net = build_labeling_network(problem)

    # Assert
    arcs = sorted(net.arcs())
    assert arcs == [(0, 1, 4.0), (0, 3, 2.0), (1, 0, 2.0), (1, 3, 0.5), (2, 0, 1.0), (2, 1, 3.0)]
    assert net.infinity is None


def test_labeling_network_sentinel_for_fixed_nodes():
    problem = LabelingProblem(
        nodes=[7, 9],
        data_cost=[(1.0, 2.0), (3.0, 0.5)],
        social_edges=[],
        k_out=[1.0, 1.0],
        lam=1.0,
        fixed={0: POST, 1: PRE},
    )

    net = build_labeling_network(problem)

    big = 1.0 + 2.0 + 3.0 + 0.5 + 1.0
    assert net.infinity == big
    assert (2, 0, big) in list(net.arcs())
    assert (1, 3, big) in list(net.arcs())


# --- labeling


def test_cut_matches_brute_force_on_random_problems():
    rng = random.Random(7)
    for trial in range(500):
        n = rng.randint(1, 15)
        lam = rng.choice([0.0, 0.3, 1.0, 4.0, 25.0])
        problem = random_problem(rng, n, lam=lam, n_fixed=min(n, rng.randint(0, 2)))

        cut = solve_labeling(problem)
        exact = brute_force_labeling(problem)

        assert cut.energy == pytest.approx(exact.energy, rel=1e-9, abs=1e-9), trial
        assert cut.flow_value == pytest.approx(cut.energy, rel=1e-9, abs=1e-9)
        assert labeling_energy(problem, cut.labels) == pytest.approx(cut.energy)
        assert len(cut.labels) == n
        assert all(lbl in (PRE, POST) for lbl in cut.labels)
        for i, lbl in problem.fixed.items():
            assert cut.labels[i] == lbl


def test_zero_lambda_reduces_to_posterior_argmax():
    rng = random.Random(3)
    problem = random_problem(rng, 30, lam=0.0)

    solution = solve_labeling(problem)

    expected = [POST if d1 < d0 else PRE for d0, d1 in problem.data_cost]
    assert solution.labels == expected


def test_infinite_lambda_gives_one_label_per_component():
    rng = random.Random(9)
    problem = random_problem(rng, 25, lam=math.inf)

    solution = solve_labeling(problem)

    for component in connected_components(problem):
        labels = {solution.labels[i] for i in component}
        assert len(labels) == 1
        cost0 = sum(problem.data_cost[i][0] for i in component)
        cost1 = sum(problem.data_cost[i][1] for i in component)
        assert labels == {POST if cost1 < cost0 else PRE}


def test_contradictory_fixed_labels_under_infinite_lambda():
    problem = LabelingProblem(
        nodes=[1, 2],
        data_cost=[(0.1, 0.2), (0.1, 0.2)],
        social_edges=[(0, 1), (1, 0)],
        k_out=[1.0, 1.0],
        lam=math.inf,
        fixed={0: POST, 1: PRE},
    )

    with pytest.raises(DataError):
        solve_labeling(problem)


def test_social_edges_pull_an_uncertain_node():
    # node 0 leans prepaid but calls three confident postpaid users
    posts = [0.45, 0.99, 0.99, 0.99]
    problem = LabelingProblem(
        nodes=[1, 2, 3, 4],
        data_cost=[data_cost((1 - p, p)) for p in posts],
        social_edges=[(0, 1), (0, 2), (0, 3)],
        k_out=[3.0, 1.0, 1.0, 1.0],
        lam=1.0,
    )

    assert solve_labeling(problem).labels == [POST, POST, POST, POST]
    assert solve_labeling(replace(problem, lam=0.0)).labels[0] == PRE


def test_brute_force_limits_and_ties():
    tie = LabelingProblem(nodes=[1], data_cost=[(0.5, 0.5)], social_edges=[], k_out=[0.0], lam=0.0)

    assert brute_force_labeling(tie).labels == [PRE]
    with pytest.raises(DataError):
        brute_force_labeling(random_problem(random.Random(1), 21, lam=1.0))


def test_problem_document_keeps_infinite_lambda():
    problem = random_problem(random.Random(4), 6, lam=math.inf, n_fixed=1)

    restored = LabelingProblem.from_document(problem.to_document())

    assert restored == problem


# --- pruning


def test_pruning_fixes_confident_users_with_agreeing_neighbours():
    # Arrange
    graph = build_call_graph([call(1, 2), call(3, 1), call(4, 5)], {1, 2, 3, 4, 5})
    posteriors = {
        1: (0.1, 0.9),
        2: (0.3, 0.7),
        3: (0.3, 0.7),
        4: (0.1, 0.9),
        5: (0.4, 0.6),
    }

    # Act
    fixed = prune_fix_labels(posteriors, graph, tau1=0.85, tau2=0.65)

    # Assert
    assert fixed == {1: POST}


def test_pruning_thresholds_are_strict():
    graph = build_call_graph([call(1, 2)], {1, 2})

    assert prune_fix_labels({1: (0.15, 0.85), 2: (0.1, 0.9)}, graph) == {2: POST}
    assert prune_fix_labels({1: (0.9, 0.1), 2: (0.65, 0.35)}, graph) == {}
    assert prune_fix_labels({1: (0.9, 0.1), 2: (0.7, 0.3)}, graph) == {1: PRE}


def test_pruning_is_monotone_in_thresholds():
    rng = random.Random(12)
    users = list(range(1, 80))
    records = [call(u, rng.choice([v for v in users if v != u])) for u in users for _ in range(3)]
    graph = build_call_graph(records, set(users))
    posteriors = {}
    for u in users:
        p = rng.random()
        posteriors[u] = (1.0 - p, p)

    loose = prune_fix_labels(posteriors, graph, 0.6, 0.55)
    tight = prune_fix_labels(posteriors, graph, 0.8, 0.7)

    assert set(tight) <= set(loose)


def test_pruning_rejects_bad_thresholds():
    graph = build_call_graph([call(1, 2)], {1, 2})

    with pytest.raises(ConfigError):
        prune_fix_labels({1: (0.5, 0.5)}, graph, tau1=0.5)


# --- problem assembly and lambda selection


def test_build_problem_from_call_graph():
    records = [call(1, 2), call(1, 3), call(2, 1, dur=40), call(3, 9)]
    graph = build_call_graph(records, {1, 2, 3, 9})
    posteriors = {u: (0.5, 0.5) for u in (1, 2, 3)}

    by_degree = build_problem(graph, [1, 2, 3], posteriors, lam=2.0)
    by_duration = build_problem(graph, [1, 2, 3], posteriors, lam=2.0, weight="duration")

    assert by_degree.social_edges == [(0, 1), (0, 2), (1, 0)]
    assert by_degree.k_out == [2.0, 1.0, 1.0]
    assert by_duration.k_out == [20.0, 40.0, 10.0]


def test_log_grid_and_bad_grid():
    grid = log_grid(0.01, 100.0, 5)

    assert grid == pytest.approx([0.01, 0.1, 1.0, 10.0, 100.0])
    with pytest.raises(ConfigError):
        log_grid(0.0, 1.0, 3)


def test_lambda_sweep_rows_are_sorted_by_lambda():
    problem = random_problem(random.Random(6), 8, lam=0.0)
    truth = {i: POST for i in range(8)}

    rows = lambda_sweep(problem, [1.0, 0.0, 10.0], truth)

    assert [r["lambda"] for r in rows] == [0.0, 1.0, 10.0]
    assert all(0.0 <= r["accuracy"] <= 1.0 and r["fixed_fraction"] == 0.0 for r in rows)


def test_tuning_breaks_ties_towards_smaller_lambda():
    # without social edges every lambda yields the same labeling
    problem = replace(random_problem(random.Random(6), 8, lam=0.0), social_edges=[])

    lam, rows = tune_lambda(problem, [5.0, 0.5, 2.0], {0: PRE, 1: POST})

    assert lam == 0.5
    assert len({r["accuracy"] for r in rows}) == 1
