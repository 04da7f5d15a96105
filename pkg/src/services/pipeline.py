from __future__ import annotations

import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np

from ..exceptions import DataError
from ..profiling import step
from .cdr import CallGraph, build_call_graph, call_mix_matrix, check_graph_invariants, filter_users
from .classify import (
    fit_and_score,
    evaluate,
    nb_posteriors,
    nb_predict,
    nb_train,
    sample_training_set,
    scaled_per_class,
)
from .crossnet import (
    bipartite_diagnostics,
    classify_cross,
    inter_company_attributes,
    score_hidden_b,
    two_way_propagation,
)
from .features import BASE_FEATURES, PORTION_FEATURES, activity_ratios, collect_attributes, feature_matrix
from .mincut import (
    build_problem,
    connected_components,
    lambda_sweep,
    log_grid,
    prune_fix_labels,
    solve_labeling,
    tune_lambda,
)
from .models import (
    BipartiteGraph,
    CdrRecord,
    FilterPolicy,
    GaussianNbModel,
    ParseReport,
    PropagationResult,
    StumpEnsemble,
    SubscriptionLabel,
    SynthConfig,
    UserAttributes,
    UserId,
)
from .repositories import CorpusRepository, JsonModelRepository
from .synth import generate_cdrs

logger = logging.getLogger(__name__)

AUTO_LAMBDA_GRID = (1e-2, 1e2, 9)


@dataclass
class PreparedCorpus:
    """Parsed, filtered and featurised company corpus."""
    records: list[CdrRecord]
    report: ParseReport
    truth: dict[UserId, SubscriptionLabel]
    graph: CallGraph
    attributes: dict[UserId, UserAttributes]
    users: list[UserId] = field(default_factory=list)
    labeled: list[UserId] = field(default_factory=list)

    def labels_of(self, users: list[UserId]) -> np.ndarray:
        return np.array([int(self.truth[u]) for u in users], dtype=np.int64)


def _parse_summary(report: ParseReport) -> dict[str, Any]:
    return {"lines_read": report.lines_read, "records": report.records, "malformed": len(report.malformed)}


class Pipeline:
    """Stage composition behind the CLI subcommands; every stage reads and writes through the repository."""

    def __init__(self, repo: CorpusRepository, executor: Executor | None = None) -> None:
        self._repo = repo
        self._executor = executor
        self._nb_store = JsonModelRepository(GaussianNbModel)
        self._boost_store = JsonModelRepository(StumpEnsemble)
        self._propagation_store = JsonModelRepository(PropagationResult)

    # --- gen

    def generate(self, synth: SynthConfig, out: Path, compress: bool = False) -> dict[str, Any]:
        with step("Generate corpus", logger):
            corpus = generate_cdrs(synth)
        with step("Write corpus", logger):
            paths = self._repo.write_corpus(corpus, out, compress=compress)
        everyone = set(corpus.truth)
        graph = build_call_graph(corpus.records, everyone)
        check_graph_invariants(graph)
        attributes = collect_attributes(graph, sorted(everyone))
        metrics: dict[str, Any] = {
            "users": len(corpus.truth),
            "postpaid": sum(int(v) for v in corpus.truth.values()),
            "records": len(corpus.records),
            "call_mix": call_mix_matrix(graph, corpus.truth),
            "activity_ratios": activity_ratios(attributes, corpus.truth),
            "files": {k: p.name for k, p in sorted(paths.items())},
        }
        if corpus.bipartite is not None:
            metrics["bipartite"] = bipartite_diagnostics(corpus.bipartite)
            metrics["inter_company_records"] = len(corpus.inter_company_records)
        return metrics

    # --- shared ingest

    def prepare_corpus(
        self,
        cdr: Path,
        truth: Path,
        has_header: bool = False,
        policy: FilterPolicy | None = None,
        window: tuple[int, int] | None = None,
    ) -> PreparedCorpus:
        with step("Load CDRs", logger):
            records, report = self._repo.load_records(cdr, has_header=has_header, window=window)
            labels = self._repo.read_labels(truth)
        with step("Build call graph", logger):
            kept = filter_users(records, policy)
            graph = build_call_graph(records, kept)
            attributes = collect_attributes(graph, sorted(kept))
        users = sorted(attributes)
        labeled = [u for u in users if u in labels]
        if not labeled:
            raise DataError("no kept user has a truth label")
        logger.info("Pipeline: corpus users=%d labeled=%d edges=%d", len(users), len(labeled),
                    graph.number_of_edges())
        return PreparedCorpus(records, report, labels, graph, attributes, users, labeled)

    def _split(self, labels: dict[UserId, SubscriptionLabel], n_per_class: int, seed: int):
        n = scaled_per_class(labels, n_per_class)
        return sample_training_set(labels, n, seed)

    # --- classify

    def classify(
        self, corpus: PreparedCorpus, out: Path, n_per_class: int, seed: int, portion: bool, rounds: int
    ) -> dict[str, Any]:
        truth = {u: corpus.truth[u] for u in corpus.labeled}
        split = self._split(truth, n_per_class, seed)
        X = feature_matrix(corpus.graph, corpus.attributes, corpus.labeled, corpus.truth, portion=portion)
        y = corpus.labels_of(corpus.labeled)
        with step("Train classifiers", logger):
            scores, nb, boost = fit_and_score(X, y, corpus.labeled, split, rounds=rounds)
        self._nb_store.save(out / "nb_model.json", nb)
        self._boost_store.save(out / "adaboost_model.json", boost)
        names = BASE_FEATURES + (PORTION_FEATURES if portion else ())
        self._repo.write_features(out / "features.csv", corpus.labeled, corpus.truth, X, names)
        return {
            "parse": _parse_summary(corpus.report),
            "portion": portion,
            "n_train": len(split.train),
            "n_test": len(split.test),
            "adaboost_rounds": boost.rounds,
            "naive_bayes": scores["naive_bayes"].summary(),
            "adaboost": scores["adaboost"].summary(),
            "activity_ratios": activity_ratios(corpus.attributes, corpus.truth),
        }

    # --- label

    def label(
        self,
        corpus: PreparedCorpus,
        out: Path,
        n_per_class: int,
        seed: int,
        lam: float | Literal["auto"],
        prune: bool = False,
        tau1: float = 0.85,
        tau2: float = 0.65,
        sweep: tuple[float, float, int] | None = None,
        smoothness: Literal["degree", "calls", "duration"] = "degree",
        export_problem: bool = False,
        nb_model: Path | None = None,
    ) -> dict[str, Any]:
        truth = {u: corpus.truth[u] for u in corpus.labeled}
        split = self._split(truth, n_per_class, seed)
        users = corpus.users
        X = feature_matrix(corpus.graph, corpus.attributes, users)
        row = {u: i for i, u in enumerate(users)}
        if nb_model is not None:
            nb = self._nb_store.load(nb_model)
        else:
            train_rows = [row[u] for u in split.train]
            nb = nb_train(X[train_rows], corpus.labels_of(split.train))
        post = nb_posteriors(nb, X)
        nb_labels = nb_predict(nb, X)
        posteriors = {u: (float(post[i, 0]), float(post[i, 1])) for i, u in enumerate(users)}
        self._nb_store.save(out / "nb_model.json", nb)

        fixed = prune_fix_labels(posteriors, corpus.graph, tau1, tau2) if prune else {}
        start_lam = 0.0 if lam == "auto" else lam
        with step("Build labeling problem", logger):
            problem = build_problem(corpus.graph, users, posteriors, start_lam, fixed, smoothness)

        metrics: dict[str, Any] = {"parse": _parse_summary(corpus.report), "smoothness": smoothness}
        if lam == "auto":
            validation = {row[u]: truth[u] for u in split.train}
            grid = [0.0, *log_grid(*AUTO_LAMBDA_GRID)]
            with step("Tune lambda", logger):
                lam, tuning = tune_lambda(problem, grid, validation)
            metrics["lambda_tuning"] = tuning
        problem.lam = lam
        test_truth = {row[u]: truth[u] for u in split.test}
        if sweep is not None:
            rows = lambda_sweep(problem, log_grid(*sweep), test_truth)
            self._repo.write_table(out / "lambda_sweep.csv", ("lambda", "accuracy", "energy", "fixed_fraction"), rows)
            metrics["lambda_sweep"] = rows
        if export_problem:
            self._repo.write_document(out / "problem.json", problem.to_document())

        with step("Solve labeling", logger):
            solution = solve_labeling(problem)
        self._repo.write_solution(out / "solution.csv", users, solution.labels, post[:, 0].tolist(), problem.fixed)

        def score(labels) -> dict[str, Any]:
            predictions = {u: SubscriptionLabel(int(labels[row[u]])) for u in split.test}
            return evaluate(predictions, truth).summary()

        metrics.update({
            "lambda": lam if math.isfinite(lam) else "inf",
            "nodes": problem.n_nodes,
            "social_edges": len(problem.social_edges),
            "components": len(connected_components(problem)),
            "fixed": len(problem.fixed),
            "fixed_fraction": len(problem.fixed) / problem.n_nodes,
            "energy": solution.energy,
            "flow_value": solution.flow_value,
            "n_train": len(split.train),
            "n_test": len(split.test),
            "naive_bayes": score(nb_labels),
            "graph_labeling": score(solution.labels),
        })
        return metrics

    # --- crossnet

    def crossnet_attributes(
        self,
        sides: Path,
        cross_cdr: Path,
        has_header: bool,
        n_per_class: int,
        seed: int,
        rounds: int,
        window: tuple[int, int] | None = None,
    ) -> dict[str, Any]:
        side_a, side_b = self._repo.read_sides(sides)
        records, report = self._repo.load_records(cross_cdr, has_header=has_header, window=window)
        graph, attributes = inter_company_attributes(records, side_a, side_b)
        users = sorted(u for u in attributes if u in side_a)
        if not users:
            raise DataError("no side A user calls into side B")
        labels = {u: side_a[u] for u in users}
        split = self._split(labels, n_per_class, seed)
        X = feature_matrix(graph, attributes, users)
        y = np.array([int(labels[u]) for u in users], dtype=np.int64)
        scores = classify_cross(X, y, users, split, rounds=rounds)
        return {
            "mode": "attr",
            "parse": _parse_summary(report),
            "users": len(users),
            "n_train": len(split.train),
            "n_test": len(split.test),
            "naive_bayes": scores["naive_bayes"].summary(),
            "adaboost": scores["adaboost"].summary(),
        }

    def crossnet_propagation(
        self,
        sides: Path,
        edges: Path,
        out: Path,
        realizations: int,
        seed: int,
        randomize: bool = False,
        n_swaps: int | None = None,
        hidden_b: Path | None = None,
    ) -> dict[str, Any]:
        side_a, side_b = self._repo.read_sides(sides)
        graph = BipartiteGraph(side_a=side_a, side_b=frozenset(side_b), edges=tuple(self._repo.read_edges(edges)))
        with step("Two-way propagation", logger):
            result = two_way_propagation(graph, realizations, seed, randomize, n_swaps, self._executor)
        self._propagation_store.save(out / "propagation.json", result)
        self._repo.write_labels(out / "b_labels.csv", result.b_labels)
        metrics: dict[str, Any] = {"mode": "prop", **result.report()}
        if hidden_b is not None:
            hidden = self._repo.read_labels(hidden_b)
            b_labels = {u: SubscriptionLabel(v) for u, v in result.b_labels.items()}
            metrics["oracle_b"] = score_hidden_b(b_labels, hidden).summary()
        return metrics

    # --- eval

    def evaluate_files(self, predictions: Path, truth: Path) -> dict[str, Any]:
        cm = evaluate(self._repo.read_labels(predictions), self._repo.read_labels(truth))
        return {"confusion": cm.summary()}
