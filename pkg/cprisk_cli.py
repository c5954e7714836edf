#!/usr/bin/env python3
"""
cprisk_cli.py

Top-level CLI for the counterparty-risk investment solver.

Commands:
  - solve     : solve a JSON run config, write the per-node solution CSV
  - tables    : recompute the embedded strategy tables and compare cell by cell
  - figures   : value-function curves (Y vs Merton) for the gamma or lambda sweep
  - simulate  : Monte Carlo report for the solved strategy of a run config

Exit codes: 0 ok, 1 tolerance failure, 2 input error, 3 solver failure.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from cprisk import report
from cprisk.config import ENV_LOG_LEVEL

logger = logging.getLogger("cprisk_cli")


def _configure_logging() -> None:
    load_dotenv()
    level_name = os.getenv(ENV_LOG_LEVEL, "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(asctime)s [%(levelname)s] %(message)s",
        stream=sys.stderr,
    )


# --------------------------------------------------------------------------- #
# Commands                                                                    #
# --------------------------------------------------------------------------- #


def cli_solve(args: argparse.Namespace) -> int:
    return report.cmd_solve(args.config, out_path=args.out)


def cli_tables(args: argparse.Namespace) -> int:
    return report.cmd_tables(as_json=args.json)


def cli_figures(args: argparse.Namespace) -> int:
    return report.cmd_figures(args.which, args.out, p=args.p, values=args.values, n_steps=args.n_steps)


def cli_simulate(args: argparse.Namespace) -> int:
    return report.cmd_simulate(args.config, paths=args.paths, seed=args.seed, out_path=args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cprisk_cli.py",
        description="Optimal investment under counterparty default risk",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    p_solve = subparsers.add_parser("solve", help="Solve a run config and write the per-node CSV")
    p_solve.add_argument("--config", required=True, help="Path to the JSON run config")
    p_solve.add_argument(
        "--out",
        default=None,
        help="CSV output path (default: config output_path, else stdout)",
    )
    p_solve.set_defaults(func=cli_solve)

    p_tables = subparsers.add_parser("tables", help="Reproduce the embedded strategy tables")
    p_tables.add_argument("--json", action="store_true", help="Print the comparison as JSON")
    p_tables.set_defaults(func=cli_tables)

    p_fig = subparsers.add_parser("figures", help="Emit value-function curves as CSV")
    p_fig.add_argument("--which", required=True, choices=sorted(report.FIGURE_SETS), help="Swept parameter")
    p_fig.add_argument("--out", required=True, help="Curves CSV output path")
    p_fig.add_argument("--p", type=float, default=None, help="CRRA exponent (default: 0.1)")
    p_fig.add_argument(
        "--values",
        type=float,
        nargs="+",
        default=None,
        help="Override the swept gamma or lambda values",
    )
    p_fig.add_argument("--n-steps", dest="n_steps", type=int, default=1000, help="ODE grid size (default: 1000)")
    p_fig.set_defaults(func=cli_figures)

    p_sim = subparsers.add_parser("simulate", help="Monte Carlo check of a run config's optimal strategy")
    p_sim.add_argument("--config", required=True, help="Path to the JSON run config")
    p_sim.add_argument("--paths", type=int, default=None, help="Number of paths (default: config sim.n_paths)")
    p_sim.add_argument("--seed", type=int, default=None, help="Seed (default: config sim.seed)")
    p_sim.add_argument("--out", default=None, help="JSON output path (default: stdout)")
    p_sim.set_defaults(func=cli_simulate)

    return parser


# --------------------------------------------------------------------------- #
# Main entrypoint                                                             #
# --------------------------------------------------------------------------- #


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches the input-error code.
        return int(exc.code or 0)
    _configure_logging()
    logger.debug("command=%s", args.command)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
