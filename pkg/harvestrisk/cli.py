#!/usr/bin/env python3
"""
Command-line interface for scenario runs.
"""

import argparse
import sys
from typing import List, Optional

from dotenv import load_dotenv
from loguru import logger

from . import __version__
from .api import SUBCOMMANDS, RunRequest, process
from .errors import EXIT_USAGE
from .logging import configure_logging

DESCRIPTIONS = {
    "spectral": "Lowest eigenpair of the drift matrix",
    "solve": "theta, Lambda(alpha), closed-loop matrix and psi_0 on the time grid",
    "simulate": "State and harvest-rate time series from the barycentric mean",
    "risk": "Total Wasserstein-barycentric risk of the harvest loss",
    "allocate": "Euler allocation of the risk to regions",
    "robust": "Robust model and robust harvest policy",
    "barycenter": "Wasserstein barycenter of the priors and Frechet variance",
    "verify": "Run the numerical oracle suite",
}


class UsageExitParser(argparse.ArgumentParser):
    """Parser that exits with status 64 on usage errors and on empty input."""

    def parse_args(self, args=None, namespace=None):
        if args is None:
            args = sys.argv[1:]
        if not args:
            self.print_help(sys.stderr)
            sys.exit(EXIT_USAGE)
        return super().parse_args(args, namespace)

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def create_parser() -> argparse.ArgumentParser:
    """Create argument parser."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--scenario", "-s", required=True, help="Scenario file (JSON, or YAML by extension)"
    )
    common.add_argument(
        "--out", "-o", default=".", help="Output directory (default: current directory)"
    )
    common.add_argument(
        "--tolerance",
        "-t",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a numerical tolerance, e.g. --tolerance hjb=1e-8 (repeatable)",
    )
    common.add_argument(
        "--variant",
        choices=["paper", "foc"],
        help="Finite-horizon harvest-rate variant (default: from the scenario)",
    )
    common.add_argument(
        "--no-aversion",
        action="store_true",
        help="Penalty-free limit: risk under the barycenter alone",
    )
    common.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        default=argparse.SUPPRESS,
        help="Enable verbose logging",
    )

    parser = UsageExitParser(
        description="Closed-form spatial harvesting policies and their Wasserstein risk",
        usage="harvestrisk [options] SUBCOMMAND --scenario FILE [--out DIR]",
        prog="harvestrisk",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    parser.add_argument(
        "--verbose", "-v", action="store_true", help="Enable verbose logging"
    )

    subparsers = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    subparsers.required = True
    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(
            name, parents=[common], help=DESCRIPTIONS[name], description=DESCRIPTIONS[name]
        )
        if name == "simulate":
            sub.add_argument(
                "--finite-horizon",
                action="store_true",
                help="Also write the exact finite-horizon path (simulate_finite_horizon.csv)",
            )
    return parser


def main(argv: Optional[List[str]] = None):
    """Main entry point."""
    parser = create_parser()
    args = parser.parse_args(argv)

    load_dotenv()
    configure_logging(args.verbose)
    logger.debug(f"Arguments: {args}")

    request = RunRequest(
        subcommand=args.subcommand,
        scenario_path=args.scenario,
        out_dir=args.out,
        variant=args.variant,
        no_aversion=args.no_aversion,
        tolerances=args.tolerance,
        finite_horizon=getattr(args, "finite_horizon", False),
    )
    try:
        response = process(request)
    except Exception as e:
        if args.verbose:
            logger.exception("Unexpected failure")
        print(f"harvestrisk: internal error: {e}", file=sys.stderr)
        sys.exit(1)

    for path in response.files:
        logger.info(f"Wrote {path}")
    if not response.success:
        print(f"harvestrisk: {response.error}", file=sys.stderr)
    sys.exit(response.exit_code)


if __name__ == "__main__":
    main()
