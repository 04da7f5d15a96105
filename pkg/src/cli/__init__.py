from __future__ import annotations

import argparse

from . import classify, crossnet, evaluate, gen, label

SUBCOMMANDS = (gen, classify, label, crossnet, evaluate)
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subtype",
        description="Prepaid/postpaid subscriber classification from call detail records",
    )
    parser.add_argument("--config", default=None, help="TOML or JSON run config; flags override it")
    parser.add_argument("--threads", type=int, default=None, help="Worker cap for the shared thread pool")
    parser.add_argument("--log-level", default=None, type=str.upper, choices=LOG_LEVELS)
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for module in SUBCOMMANDS:
        module.register(subparsers)
    return parser
