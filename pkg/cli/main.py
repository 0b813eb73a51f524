#!/usr/bin/env python
"""chemokin command line: run, study-eps, verify, compare.

Exit codes: 0 success, 1 solver error, 2 bad config or violated model
assumption, 3 unreadable/unwritable files, 4 failed verification or a
flagged diagnostics row.
"""
from __future__ import annotations

import argparse
import sys
from typing import List

from cli.commands import cmd_compare, cmd_run, cmd_study_eps, cmd_verify
from cli.config import RunConfig
from utils.errors import ChemokinError
from utils.log import logger, set_verbosity

__all__ = ["EXIT_CODES", "exit_code", "build_parser", "main"]

EXIT_CODES = {
    "bad-config": 2,
    "assumption-violation": 2,
    "io-error": 3,
    "verification-failed": 4,
}


def exit_code(error: ChemokinError) -> int:
    return EXIT_CODES.get(error.code, 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chemokin", description="Kinetic chemotaxis with internal adaptation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-step detail")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write dumps and diagnostics")
    run.add_argument("config", type=str)
    run.add_argument("--restart", type=str, default=None, help="continue from a CHKIN1 dump")
    run.add_argument("--no-progress", action="store_true")

    study = sub.add_parser("study-eps", help="fast-adaptation study over a decreasing eps family")
    study.add_argument("config", type=str)
    study.add_argument("--eps", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    study.add_argument("--t-end", type=float, default=None)
    study.add_argument("--no-progress", action="store_true")

    verify = sub.add_parser("verify", help="kernel, oracle, conservation and envelope checks")
    verify.add_argument("config", type=str)

    compare = sub.add_parser("compare", help="L1 and sup distance between two dumps")
    compare.add_argument("dump_a", type=str)
    compare.add_argument("dump_b", type=str)
    return parser


def main(argv: List[str] = None) -> int:
    args = build_parser().parse_args(argv)
    set_verbosity(args.verbose)

    try:
        if args.command == "run":
            return cmd_run(RunConfig.from_file(args.config), restart=args.restart, progress=not args.no_progress)
        if args.command == "study-eps":
            return cmd_study_eps(
                RunConfig.from_file(args.config), args.eps, t_end=args.t_end, progress=not args.no_progress
            )
        if args.command == "verify":
            return cmd_verify(RunConfig.from_file(args.config))
        return cmd_compare(args.dump_a, args.dump_b)
    except ChemokinError as e:
        logger.error(str(e))
        return exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
