"""
ga-enkf: Gaussian-approximation dual EnKF on a nonlinear model.

Same flags as enkf, with --model choosing the pendulum or the custom system.
Statistics are recorded in error coordinates around the model's target.
"""

import argparse

from app.cli.options import add_common_arguments, add_solver_arguments, collect_overrides
from app.models.enums import SystemPreset

COMMAND = "ga-enkf"


def overrides(args: argparse.Namespace) -> dict:
    return collect_overrides(args, {"model": "system.preset"})


def register(subparsers) -> None:
    parser = subparsers.add_parser(COMMAND, help="Run the Gaussian-approximation dual EnKF")
    add_common_arguments(parser)
    add_solver_arguments(parser, system=False)
    parser.add_argument(
        "--model",
        choices=[SystemPreset.PENDULUM.value, SystemPreset.CUSTOM.value],
        help="Nonlinear model",
    )
    parser.set_defaults(
        command=COMMAND,
        build_overrides=overrides,
        defaults={"system": {"preset": SystemPreset.PENDULUM.value}},
    )
