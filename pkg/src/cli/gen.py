from __future__ import annotations

import argparse
import logging
from typing import Any

from ..config import GenConfig, resolve_run_config
from ..services.pipeline import Pipeline
from .common import add_run_arguments, write_run_outputs

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("gen", help="Generate a synthetic CDR corpus with ground truth")
    add_run_arguments(parser)
    parser.add_argument("--users", type=int, default=None, help="Company users")
    parser.add_argument("--postpaid-fraction", type=float, default=None)
    parser.add_argument("--b-users", type=int, default=None, help="External operator users (default: --users)")
    parser.add_argument("--compress", action="store_true", default=None, help="Write cdr.csv.gz")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, pipeline: Pipeline) -> dict[str, Any]:
    overrides = {
        "out": args.out,
        "seed": args.seed,
        "compress": args.compress,
        "synth": {
            "n_users": args.users,
            "postpaid_fraction": args.postpaid_fraction,
            "bipartite": {"n_b_users": args.b_users},
        },
    }
    cfg = resolve_run_config(GenConfig, args.config, overrides)
    logger.info("CLI: gen users=%d seed=%d out=%s", cfg.synth.n_users, cfg.seed, cfg.out)
    metrics = pipeline.generate(cfg.synth, cfg.out, compress=cfg.compress)
    return write_run_outputs("gen", cfg, metrics, {})
