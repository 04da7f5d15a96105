from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import Any

from ..config import CrossnetConfig, resolve_run_config
from ..services.pipeline import Pipeline
from .common import add_run_arguments, prepare_out, write_run_outputs

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("crossnet", help="Infer external-operator users from inter-company ties")
    add_run_arguments(parser)
    parser.add_argument("--mode", choices=("attr", "prop"), default=None)
    parser.add_argument("--sides", type=Path, default=None, help="Side manifest CSV user_id,side,label")
    parser.add_argument("--cross-cdr", type=Path, default=None, help="Inter-company CDR file (attr mode)")
    parser.add_argument("--edges", type=Path, default=None, help="Bipartite edge list CSV from,to (prop mode)")
    parser.add_argument("--hidden-b", type=Path, default=None, help="Hidden B labels of a generated corpus")
    parser.add_argument("--has-header", action="store_true", default=None)
    parser.add_argument("--window", default=None, metavar="START:END", help="Observation window of --cross-cdr")
    parser.add_argument("--realizations", type=int, default=None)
    parser.add_argument("--randomize", action="store_true", default=None,
                        help="Run on degree-preserving randomized copies")
    parser.add_argument("--n-swaps", type=int, default=None, help="Accepted swaps per realization (default 10x edges)")
    parser.add_argument("--n-per-class", type=int, default=None)
    parser.add_argument("--rounds", type=int, default=None)
    parser.add_argument("--oracle-b", action="store_true", default=None,
                        help="Also score inferred B labels against hidden labels")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, pipeline: Pipeline) -> dict[str, Any]:
    overrides = {
        "out": args.out,
        "seed": args.seed,
        "mode": args.mode,
        "sides": args.sides,
        "cross_cdr": args.cross_cdr,
        "edges": args.edges,
        "hidden_b": args.hidden_b,
        "has_header": args.has_header,
        "window": args.window,
        "realizations": args.realizations,
        "randomize": args.randomize,
        "n_swaps": args.n_swaps,
        "n_per_class": args.n_per_class,
        "rounds": args.rounds,
        "oracle_b": args.oracle_b,
    }
    cfg = resolve_run_config(CrossnetConfig, args.config, overrides)
    prepare_out(cfg.out)
    inputs: dict[str, Path | None] = {"sides": cfg.sides}
    if cfg.mode == "attr":
        inputs["cross_cdr"] = cfg.cross_cdr
        metrics = pipeline.crossnet_attributes(
            cfg.sides, cfg.cross_cdr, cfg.has_header, cfg.n_per_class, cfg.seed, cfg.rounds, cfg.window
        )
    else:
        inputs["edges"] = cfg.edges
        hidden = None
        if cfg.oracle_b:
            hidden = cfg.hidden_b or cfg.sides.with_name("hidden_b.csv")
            if not hidden.exists():
                logger.warning("CLI: --oracle-b without hidden labels at %s; skipped", hidden)
                hidden = None
            inputs["hidden_b"] = hidden
        metrics = pipeline.crossnet_propagation(
            cfg.sides, cfg.edges, cfg.out, cfg.realizations, cfg.seed, cfg.randomize, cfg.n_swaps, hidden
        )
    return write_run_outputs("crossnet", cfg, metrics, inputs)
