from __future__ import annotations

import argparse
from pathlib import Path
from typing import Any

from ..config import EvalConfig, resolve_run_config
from ..services.pipeline import Pipeline
from .common import add_run_arguments, prepare_out, write_run_outputs


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="Score a predictions CSV against truth labels")
    add_run_arguments(parser)
    parser.add_argument("--predictions", type=Path, default=None, help="CSV user_id,label")
    parser.add_argument("--truth", type=Path, default=None, help="CSV user_id,label")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, pipeline: Pipeline) -> dict[str, Any]:
    overrides = {"out": args.out, "seed": args.seed, "predictions": args.predictions, "truth": args.truth}
    cfg = resolve_run_config(EvalConfig, args.config, overrides)
    prepare_out(cfg.out)
    metrics = pipeline.evaluate_files(cfg.predictions, cfg.truth)
    return write_run_outputs("eval", cfg, metrics, {"predictions": cfg.predictions, "truth": cfg.truth})
