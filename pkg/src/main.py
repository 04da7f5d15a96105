from __future__ import annotations

import logging
import sys
from typing import Sequence

from . import profiling
from .cli import build_parser
from .config import settings
from .container import container
from .exceptions import SubtypeError
from .services.storage import dumps_json

logger = logging.getLogger(__name__)


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def _shutdown_executor() -> None:
    executor = container.executor()
    executor.shutdown(wait=True)
    container.executor.reset()
    container.pipeline.reset()


def run(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run one subcommand and map failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(args.log_level or settings.log_level)
    profiling.enable(settings.profile)
    if args.threads is not None:
        if args.threads < 1:
            logger.error("ConfigError: --threads must be >= 1")
            return 2
        container.config.threads.from_value(args.threads)

    try:
        summary = args.handler(args, container.pipeline())
    except SubtypeError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    except Exception:
        logger.exception("Unexpected failure in %s", args.subcommand)
        return 4
    finally:
        _shutdown_executor()
    sys.stdout.write(dumps_json(summary).decode("utf-8"))
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
