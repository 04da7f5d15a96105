from __future__ import annotations

import argparse
import logging
from importlib import metadata
from pathlib import Path
from typing import Any, Mapping

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from ..config import RunConfig
from ..exceptions import ConfigError
from ..services.models import SCHEMA_VERSION
from ..services.storage import atomic_write, file_digest, write_json

logger = logging.getLogger(__name__)

ROOT_DIR = Path(__file__).resolve().parents[1]
TRACKED_PACKAGES = ("numpy", "networkx", "pydantic", "pydantic-settings", "orjson", "dependency-injector", "Jinja2")


def _num(value: Any) -> str:
    if isinstance(value, bool) or value is None:
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.4f}"
    if isinstance(value, (list, tuple)):
        if value and all(isinstance(v, Mapping) for v in value):
            return f"{len(value)} rows"
        return "[" + ", ".join(_num(v) for v in value) + "]"
    return str(value)


templates = Environment(
    loader=FileSystemLoader(str(ROOT_DIR / "templates")),
    autoescape=False,
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
    undefined=StrictUndefined,
)
templates.filters["num"] = _num


def add_run_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags every subcommand shares; all default to None so config files are not overridden."""
    parser.add_argument("--out", type=Path, default=None, help="Output directory")
    parser.add_argument("--seed", type=int, default=None, help="Run seed (all randomness derives from it)")


def add_corpus_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--cdr", type=Path, default=None, help="CDR file (csv-v1, optionally .gz)")
    parser.add_argument("--truth", type=Path, default=None, help="Truth labels CSV user_id,label")
    parser.add_argument("--has-header", action="store_true", default=None, help="CDR file starts with a header line")
    parser.add_argument("--window", default=None, metavar="START:END",
                        help="Observation window in epoch seconds; records outside it are malformed")
    parser.add_argument("--min-seconds", type=int, default=None, help="Minimum total outgoing call seconds")
    parser.add_argument("--max-seconds", type=int, default=None, help="Maximum total outgoing call seconds")
    parser.add_argument("--n-per-class", type=int, default=None, help="Training users per class")


def corpus_overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {
        "out": args.out,
        "seed": args.seed,
        "cdr": args.cdr,
        "truth": args.truth,
        "has_header": args.has_header,
        "window": args.window,
        "n_per_class": args.n_per_class,
        "filter": {
            "min_total_call_seconds": args.min_seconds,
            "max_total_call_seconds": args.max_seconds,
        },
    }


def prepare_out(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {out}: {e}")
    return out


def package_versions() -> dict[str, str]:
    versions = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def render_metrics(subcommand: str, seed: int, metrics: Mapping[str, Any]) -> str:
    return templates.get_template("metrics.txt.j2").render(subcommand=subcommand, seed=seed, metrics=metrics)


def write_run_outputs(
    subcommand: str, cfg: RunConfig, metrics: dict[str, Any], inputs: Mapping[str, Path | None]
) -> dict[str, Any]:
    """metrics.json, metrics.txt and manifest.json into the run's output directory."""
    out = prepare_out(cfg.out)
    document = {"schema_version": SCHEMA_VERSION, "subcommand": subcommand, "seed": cfg.seed, "metrics": metrics}
    write_json(out / "metrics.json", document)
    with atomic_write(out / "metrics.txt") as tmp:
        tmp.write_text(render_metrics(subcommand, cfg.seed, metrics), encoding="utf-8")
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": subcommand,
        "seed": cfg.seed,
        "config": cfg.model_dump(mode="json", by_alias=True),
        "versions": package_versions(),
        "inputs": {
            name: {"path": str(path), "sha256": file_digest(path)}
            for name, path in sorted(inputs.items())
            if path is not None
        },
    }
    write_json(out / "manifest.json", manifest)
    logger.info("CLI: %s outputs written to %s", subcommand, out)
    return {"subcommand": subcommand, "out": str(out), "metrics": str(out / "metrics.json")}
