"""Main application module.

This module sets up the command-line interface. It registers every
pipeline subcommand, configures logging, checks the run catalog and maps
failures to exit codes (1 usage, 2 I/O, 3 numerical failure).

Usage:
    python -m src.main <subcommand> [options]
"""

import argparse
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from src.cli.commands import add_common_arguments, register_commands
from src.cli.experiments import register_repro
from src.config.logger import setup_logger
from src.database.utils import (
    get_catalog_info,
    verify_catalog_connection,
    verify_required_tables,
)
from src.errors import CromError, UsageError

# Parent logger of every src.* module logger
logger = setup_logger("src", "crom.log")


class CromArgumentParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as UsageError."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    """Create the parser with all subcommands."""
    parser = CromArgumentParser(
        prog="crom",
        description="Causation-entropy reduced-order models of the Kuramoto–Sivashinsky equation",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_commands(subparsers)
    register_repro(subparsers)
    for subparser in subparsers.choices.values():
        add_common_arguments(subparser)
    return parser


def check_catalog(url: Optional[str]) -> bool:
    """Verify the run catalog. Failures are logged; the run goes on without it."""
    success, error = verify_catalog_connection(url)
    if not success:
        logger.error(f"❌ Run catalog unavailable, provenance will not be recorded: {error}")
        return False

    info = get_catalog_info(url)
    logger.debug(f"Catalog: {info.get('catalog_url')}, {info.get('recorded_runs')} recorded runs")

    success, error = verify_required_tables(url)
    if not success:
        logger.error(f"❌ Required catalog tables missing: {error}")
        return False
    return True


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, dispatch to the subcommand and return the exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        logger.error(f"❌ {e}")
        return e.exit_code

    logger.info(f"🚀 Starting {args.command}")
    args.use_catalog = check_catalog(args.catalog)
    try:
        code = args.handler(args)
    except CromError as e:
        logger.error(f"❌ {args.command} failed: {e}")
        logger.debug("Failure details", exc_info=True)
        return e.exit_code
    except ValidationError as e:
        logger.error(f"❌ Invalid configuration or input: {e}")
        logger.debug("Failure details", exc_info=True)
        return UsageError.exit_code
    logger.info(f"✅ {args.command} done")
    return code


if __name__ == "__main__":
    sys.exit(main())
