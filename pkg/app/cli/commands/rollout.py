"""
rollout: extract a policy from a filter run and simulate M closed-loop rollouts.

Outputs trajectories.csv (rollout, t, x..., u...) and summary.json with the
Monte-Carlo cost estimate.
"""

import argparse

from app.cli.options import add_common_arguments, add_solver_arguments, collect_overrides
from app.models.enums import GainMode

COMMAND = "rollout"


def overrides(args: argparse.Namespace) -> dict:
    tree = collect_overrides(
        args,
        {
            "M": "rollout.M",
            "t_sim": "rollout.T",
            "dt_sim": "rollout.dt",
            "x0": "rollout.x0",
            "gain_mode": "policy.gain_mode",
            "stationary_window": "policy.stationary_window",
            "n_samples": "policy.n_samples",
        },
    )
    if args.model_free:
        tree.setdefault("policy", {})["model_free"] = True
    return tree


def register(subparsers) -> None:
    parser = subparsers.add_parser(COMMAND, help="Closed-loop rollouts under the extracted policy")
    add_common_arguments(parser)
    add_solver_arguments(parser)
    parser.add_argument("-M", dest="M", type=int, help="Number of rollouts")
    parser.add_argument("--t-sim", dest="t_sim", type=float, help="Simulation horizon")
    parser.add_argument("--dt-sim", dest="dt_sim", type=float, help="Simulation step")
    parser.add_argument("--x0", type=float, nargs="+", help="Initial state")
    parser.add_argument("--gain-mode", dest="gain_mode", choices=[mode.value for mode in GainMode])
    parser.add_argument(
        "--stationary-window",
        dest="stationary_window",
        type=float,
        help="Average the covariance over t in [0, window] for stationary gains",
    )
    parser.add_argument("--model-free", dest="model_free", action="store_true", help="Use the Hamiltonian oracle")
    parser.add_argument("--n-samples", dest="n_samples", type=int, help="Simulator samples per oracle query")
    parser.set_defaults(command=COMMAND, build_overrides=overrides, defaults={})
