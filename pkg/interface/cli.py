"""Command-line front end.

Responsibility:
- Parse ``normvol <command> --config FILE [--seed N] [--paths N] [--terms N]
  [--out DIR] [--workers N] [-v|-vv]`` and run the matching command.
- Configure logging once for the whole process.
- Map errors to exit codes: 0 success, 1 numerical failure, 2 usage or config error.

Entry point:
- :func:`main`, called by the root ``normvol.py`` script.
"""

from collections.abc import Sequence
import argparse
import logging
import sys

from common.constants import Command, ExitCode, PricingError, UsageError
from interface.commands import COMMANDS, cmd_price
from interface.config import load_config

logger = logging.getLogger(__name__)


class _ArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises instead of exiting, so main() owns the exit code."""

    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="normvol",
        description="Bachelier option pricing under stochastic volatility: moment series and Monte Carlo benchmarks.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug output")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    helps = {
        Command.PRICE: "series prices per maturity and strike",
        Command.SMILE: "implied volatilities of series and Monte Carlo benchmark",
        Command.NSTAR: "optimal number of series terms",
        Command.GREEKS: "Delta and Gamma by series, conditional MC and FD on MC, with timings",
        Command.CV: "control-variate study CV1-CV4",
        Command.MOMENTS: "build and store the moment tables",
    }
    for command, text in helps.items():
        sub = commands.add_parser(str(command), help=text)
        sub.add_argument("--config", required=True, help="experiment file")
        sub.add_argument("--seed", type=int, help="override [sim] seed")
        sub.add_argument("--paths", type=int, help="override [sim] n_paths")
        sub.add_argument("--terms", type=int, help="override [series] n_terms")
        sub.add_argument("--out", help="override [output] directory")
        sub.add_argument("--workers", type=int, help="threads for path generation (never changes results)")
        if command is Command.PRICE:
            sub.add_argument("--strike", type=float, help="price one strike instead of the grid")
            sub.add_argument("--maturity", type=float, help="price one maturity instead of the list")
            sub.add_argument("--benchmark", action="store_true", help="add conditional Monte Carlo columns")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def run(args: argparse.Namespace) -> None:
    """Load the config, apply overrides and run one command."""
    config = load_config(args.config).with_overrides(
        seed=args.seed,
        n_paths=args.paths,
        n_terms=args.terms,
        directory=args.out,
        workers=args.workers,
    )
    command = Command(args.command)
    if command is Command.PRICE:
        paths = cmd_price(config, strike=args.strike, maturity=args.maturity, benchmark=args.benchmark)
    else:
        paths = COMMANDS[command](config)
    for path in paths:
        print(f"wrote {path}")


def main(argv: Sequence[str] | None = None) -> int:
    """Run normvol and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"normvol: {e}", file=sys.stderr)
        return ExitCode.USAGE
    _configure_logging(args.verbose)
    try:
        run(args)
    except UsageError as e:
        print(f"normvol: {e}", file=sys.stderr)
        return ExitCode.USAGE
    except PricingError as e:
        print(f"normvol: {type(e).__name__}: {e}", file=sys.stderr)
        return ExitCode.NUMERICAL
    return ExitCode.OK
