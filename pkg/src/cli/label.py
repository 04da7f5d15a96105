from __future__ import annotations

import argparse
from pathlib import Path
from typing import Any

from ..config import LabelConfig, parse_sweep, resolve_run_config
from ..services.pipeline import Pipeline
from .common import add_corpus_arguments, add_run_arguments, corpus_overrides, prepare_out, write_run_outputs


def register(subparsers) -> None:
    parser = subparsers.add_parser("label", help="Graph labeling by s-t minimum cut over NB data costs")
    add_run_arguments(parser)
    add_corpus_arguments(parser)
    parser.add_argument("--lambda", dest="lam", default=None,
                        help="Smoothness weight: a number, 'inf', or 'auto' to tune on training users")
    parser.add_argument("--prune", action="store_true", default=None, help="Fix confident users before the cut")
    parser.add_argument("--tau1", type=float, default=None)
    parser.add_argument("--tau2", type=float, default=None)
    parser.add_argument("--lambda-sweep", default=None, metavar="LO:HI:STEPS",
                        help="Also score a log-spaced lambda grid on the test users")
    parser.add_argument("--smoothness", choices=("degree", "calls", "duration"), default=None)
    parser.add_argument("--export-problem", action="store_true", default=None, help="Write problem.json")
    parser.add_argument("--nb-model", type=Path, default=None,
                        help="Naive Bayes model saved by classify; skips retraining")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, pipeline: Pipeline) -> dict[str, Any]:
    overrides = corpus_overrides(args) | {
        "lambda": args.lam,
        "prune": args.prune,
        "tau1": args.tau1,
        "tau2": args.tau2,
        "lambda_sweep": args.lambda_sweep,
        "smoothness": args.smoothness,
        "export_problem": args.export_problem,
        "nb_model": args.nb_model,
    }
    cfg = resolve_run_config(LabelConfig, args.config, overrides)
    prepare_out(cfg.out)
    corpus = pipeline.prepare_corpus(cfg.cdr, cfg.truth, cfg.has_header, cfg.filter, cfg.window)
    metrics = pipeline.label(
        corpus,
        cfg.out,
        cfg.n_per_class,
        cfg.seed,
        cfg.lam,
        prune=cfg.prune,
        tau1=cfg.tau1,
        tau2=cfg.tau2,
        sweep=parse_sweep(cfg.lambda_sweep) if cfg.lambda_sweep else None,
        smoothness=cfg.smoothness,
        export_problem=cfg.export_problem,
        nb_model=cfg.nb_model,
    )
    return write_run_outputs(
        "label", cfg, metrics, {"cdr": cfg.cdr, "truth": cfg.truth, "nb_model": cfg.nb_model}
    )
