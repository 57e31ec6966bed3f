"""
diagnose: numerical oracles.

--check poisson      residuals of the Poisson equations on a 1-D grid
--check dual         max |kappa S_t P_t - I|_F with S integrated independently
--check convergence  |S^(N)_0 - S_0|_F over a seed sweep per N
"""

import argparse

from app.cli.options import add_common_arguments, add_solver_arguments, collect_overrides
from app.models.enums import DiagnosticCheck

COMMAND = "diagnose"


def overrides(args: argparse.Namespace) -> dict:
    return collect_overrides(
        args,
        {
            "check": "diagnostics.check",
            "field_scale": "diagnostics.field_scale",
            "Ns": "diagnostics.Ns",
            "diag_seeds": "diagnostics.seeds",
        },
    )


def register(subparsers) -> None:
    parser = subparsers.add_parser(COMMAND, help="Run a numerical oracle and write a JSON report")
    add_common_arguments(parser)
    add_solver_arguments(parser)
    parser.add_argument("--check", choices=[check.value for check in DiagnosticCheck])
    parser.add_argument("--field-scale", dest="field_scale", type=float, help="Poisson oracle field multiplier")
    parser.add_argument("--Ns", dest="Ns", type=int, nargs="+", help="Particle counts for the convergence curve")
    parser.add_argument("--seeds", dest="diag_seeds", type=int, help="Seeds per particle count")
    parser.set_defaults(command=COMMAND, build_overrides=overrides, defaults={})
