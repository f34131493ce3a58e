"""Command-line entry point: `python main.py <command> [options]`."""

import argparse
import json
import logging
import sys
from typing import List, Optional

from eventcast import __version__
from eventcast.commands import benchmark, effects, evaluate, fit, forecast, ingest, synth
from eventcast.commands.common import add_run_args
from eventcast.errors import EventcastError

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

COMMANDS = [ingest, fit, forecast, evaluate, benchmark, effects, synth]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eventcast",
        description="Hourly emergency-event forecasting with a negative-binomial GAM.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    add_run_args(parser)
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    for module in COMMANDS:
        module.register(subparsers)
    for sub in subparsers.choices.values():
        add_run_args(sub)
    return parser


def configure_logging(args: argparse.Namespace) -> None:
    level = logging.INFO
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)
    logging.getLogger("matplotlib").setLevel(max(level, logging.WARNING))


def run_command(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "handler", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    configure_logging(args)
    try:
        return args.handler(args)
    except EventcastError as exc:
        logging.getLogger("eventcast").debug("command failed", exc_info=True)
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(run_command())
