from __future__ import annotations

import argparse
from typing import Any

from ..config import ClassifyConfig, resolve_run_config
from ..services.pipeline import Pipeline
from .common import add_corpus_arguments, add_run_arguments, corpus_overrides, prepare_out, write_run_outputs


def register(subparsers) -> None:
    parser = subparsers.add_parser("classify", help="Naive Bayes and AdaBoost on per-user call attributes")
    add_run_arguments(parser)
    add_corpus_arguments(parser)
    parser.add_argument("--portion", action="store_true", default=None,
                        help="Add the postpaid-share attributes of each user's callees (needs callee labels)")
    parser.add_argument("--rounds", type=int, default=None, help="AdaBoost rounds")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, pipeline: Pipeline) -> dict[str, Any]:
    overrides = corpus_overrides(args) | {"portion": args.portion, "rounds": args.rounds}
    cfg = resolve_run_config(ClassifyConfig, args.config, overrides)
    prepare_out(cfg.out)
    corpus = pipeline.prepare_corpus(cfg.cdr, cfg.truth, cfg.has_header, cfg.filter, cfg.window)
    metrics = pipeline.classify(corpus, cfg.out, cfg.n_per_class, cfg.seed, cfg.portion, cfg.rounds)
    return write_run_outputs("classify", cfg, metrics, {"cdr": cfg.cdr, "truth": cfg.truth})
