import argparse
import logging
import sys
from typing import List, Optional

from app.commands import evaluate, fit, predict, resample, simulate
from app.core.config import settings
from app.core.exceptions import ConfigError, ITRError, NumericalError

logger = logging.getLogger(__name__)

COMMANDS = (simulate, fit, predict, evaluate, resample)


def configure_logging() -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if settings.LOG_FILE:
        handlers.append(logging.FileHandler(settings.LOG_FILE))
    logging.basicConfig(
        level=settings.LOG_LEVEL,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="itr",
        description="Individualized treatment rules learned from two trials sharing a comparator arm",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def global_exception_handler(exc: BaseException) -> int:
    """Map an exception escaping a command onto the process exit code"""
    if isinstance(exc, ITRError):
        logger.error(f"{type(exc).__name__}: {exc}")
        return exc.exit_code
    logger.error(f"Unexpected error: {exc}", exc_info=True)
    return NumericalError.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on usage errors
        return 0 if e.code in (0, None) else ConfigError.exit_code
    configure_logging()
    try:
        return args.handler(args)
    except Exception as e:
        return global_exception_handler(e)


if __name__ == "__main__":
    sys.exit(main())
