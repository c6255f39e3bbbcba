"""Command-line entry point for the urn lab.

This module parses the command line into a RunManifest, sets up logging and
hands the manifest to the command router. The process exit code is the one
the router reports: 0 pass, 1 fail, 2 inconclusive, 64 configuration error,
70 runtime error.
"""

import argparse
import asyncio
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from .core.config import settings
from .models.protocol import EXIT_CONFIG_ERROR, CommandResult, RunManifest
from .routers.commands import COMMANDS, dispatch

# Set up logger
logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="urnlab",
        description="Simulation and verification of generalized Friedman urns and their branching embeddings.",
    )
    parser.add_argument("--log-level", default=None, help=f"Logging level (default {settings.log_level}).")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, spec in [*COMMANDS.items(), ("validate", None)]:
        help_text = spec.description if spec else "Validate a configuration and print its normalized form."
        sub = subparsers.add_parser(name, help=help_text, description=help_text)
        sub.add_argument("--config", required=True, metavar="PATH", help="JSON configuration file.")
        sub.add_argument("--out", default=settings.default_output_dir, metavar="DIR", help="Output directory.")
        sub.add_argument("--seed", type=int, default=None, metavar="U64", help="Overrides the configuration's master_seed.")
        sub.add_argument("--threads", type=int, default=settings.default_threads, metavar="N",
                         help="Worker cap for ensembles; 0 uses available parallelism.")
        sub.add_argument("--format", choices=["json", "csv", "both"], default=settings.default_format)
        if name == "validate":
            sub.add_argument("--as", dest="validate_as", required=True, choices=sorted(COMMANDS),
                             help="Command whose configuration model the file must satisfy.")
    return parser


def manifest_from_args(args: argparse.Namespace) -> RunManifest:
    return RunManifest(
        command=args.command,
        config_path=args.config,
        output_dir=args.out,
        master_seed=args.seed,
        threads=args.threads,
        format=args.format,
        validate_as=getattr(args, "validate_as", None),
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Runs one command and returns its exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        manifest = manifest_from_args(args)
    except ValidationError as e:
        logger.error(f"Invalid command line: {e.errors()}")
        return EXIT_CONFIG_ERROR

    result: CommandResult = asyncio.run(dispatch(manifest))
    if result.is_error:
        print(result.error_message, file=sys.stderr)
        errors = (result.output or {}).get("errors")
        for error in errors or []:
            print(f"  {error}", file=sys.stderr)
    elif manifest.command == "validate":
        print(json.dumps(result.output, indent=2))
    return result.exit_code


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
