"""
enkf: dual EnKF on an LQ instance.

Outputs enkf.csv (t, vec(n), vec(S)), gains.csv (t, vec(K~), vec(K)) and
summary.json with the error against the DRE.
"""

import argparse

from app.cli.options import add_common_arguments, add_solver_arguments, collect_overrides

COMMAND = "enkf"


def overrides(args: argparse.Namespace) -> dict:
    return collect_overrides(args)


def register(subparsers) -> None:
    parser = subparsers.add_parser(COMMAND, help="Run the dual EnKF on a linear system")
    add_common_arguments(parser)
    add_solver_arguments(parser)
    parser.set_defaults(command=COMMAND, build_overrides=overrides, defaults={})
