"""
smd / pendulum: the two three-variant experiments.

smd       convergence of the dual EnKF covariance to the DRE solution
pendulum  stabilization of the inverted cart-pole with GA dual EnKF gains
"""

import argparse

from app.cli.options import add_common_arguments, collect_overrides
from app.models.enums import SystemPreset, Variant

SMD = "smd"
PENDULUM = "pendulum"

# Gains come from the mean covariance over the last 5 s of a 10 s backward run
PENDULUM_DEFAULTS = {
    "system": {"preset": SystemPreset.PENDULUM.value},
    "solver": {"N": 10000, "T": 10.0},
    "policy": {"stationary_window": 5.0},
}


def overrides(args: argparse.Namespace) -> dict:
    return collect_overrides(
        args,
        {
            "N": "solver.N",
            "dt": "solver.dt",
            "T": "solver.T",
            "seeds": "solver.seeds",
            "variants": "objective.variants",
            "theta": "objective.sweep_theta",
            "M": "rollout.M",
        },
    )


def _add_sweep_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-N", dest="N", type=int, help="Particle count")
    parser.add_argument("--dt", type=float, help="Time step")
    parser.add_argument("-T", dest="T", type=float, help="Filter horizon")
    parser.add_argument("--theta", type=float, help="|theta| used for the risk-sensitive variants")
    parser.add_argument("--variants", nargs="+", choices=[v.value for v in Variant], help="Variants to run")


def register(subparsers) -> None:
    smd = subparsers.add_parser(SMD, help="Spring-mass-damper convergence sweep")
    add_common_arguments(smd)
    _add_sweep_arguments(smd)
    smd.add_argument("--seeds", type=int, help="Seeds averaged per variant")
    smd.set_defaults(command=SMD, build_overrides=overrides, defaults={"system": {"preset": SystemPreset.SMD.value}})

    pendulum = subparsers.add_parser(PENDULUM, help="Inverted pendulum stabilization")
    add_common_arguments(pendulum)
    _add_sweep_arguments(pendulum)
    pendulum.add_argument("-M", dest="M", type=int, help="Rollouts per variant")
    pendulum.set_defaults(
        command=PENDULUM,
        build_overrides=overrides,
        defaults=PENDULUM_DEFAULTS,
    )
