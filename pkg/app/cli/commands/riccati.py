"""
riccati: reference P_t, g_t, S_t and the stationary ARE solution.

Outputs riccati.csv (t, vec(P), g, vec(S)) and summary.json.
"""

import argparse

from app.cli.options import add_common_arguments, add_solver_arguments, collect_overrides
from app.models.enums import DualMode

COMMAND = "riccati"


def overrides(args: argparse.Namespace) -> dict:
    return collect_overrides(args, {"dual": "solver.dual"})


def register(subparsers) -> None:
    parser = subparsers.add_parser(COMMAND, help="Integrate the DRE and dual DRE; solve the ARE")
    add_common_arguments(parser)
    add_solver_arguments(parser)
    parser.add_argument(
        "--dual",
        choices=[mode.value for mode in DualMode],
        help="Fill S by inversion of P or by integrating the dual DRE",
    )
    parser.set_defaults(command=COMMAND, build_overrides=overrides, defaults={})
