"""
Main CLI Router

Builds the argument parser from the per-subcommand modules, resolves the
configuration (manifest, or defaults < file < flags), runs the command and maps
errors onto exit codes:

- 0: success
- 2: validation error (DualEnkfException with exit_code 2, or bad flags)
- 3: numerical failure
"""

import argparse
from typing import List, Optional

import structlog

from app import __version__
from app.cli.commands import diagnose, enkf, experiments, ga_enkf, riccati, rollout
from app.core.config import ExperimentConfig, load_manifest, parse_config
from app.core.exceptions import ConfigurationError, DualEnkfException
from app.core.logging import configure_logging
from app.orchestrator.experiment_runner import run_command

logger = structlog.get_logger(__name__)

COMMAND_MODULES = [riccati, enkf, ga_enkf, rollout, diagnose, experiments]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dual-enkf",
        description="Dual ensemble Kalman filter for stochastic and risk-sensitive optimal control.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in COMMAND_MODULES:
        module.register(subparsers)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Raises:
        ConfigurationError: manifest recorded for another subcommand, bad file or keys
        InsufficientParticlesError: N < d + 1
    """
    if args.manifest is not None:
        extra = {"output": {"directory": args.output}} if args.output else {}
        command, cfg = load_manifest(args.manifest, overrides=extra)
        if command != args.command:
            raise ConfigurationError(
                "manifest",
                message=f"Manifest was recorded for '{command}', not '{args.command}'",
            )
        return cfg
    return parse_config(args.config, overrides=args.build_overrides(args), defaults=args.defaults)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(level=args.log_level)

    try:
        cfg = resolve_config(args)
        run_command(args.command, cfg)
    except DualEnkfException as exc:
        logger.error("run_failed", command=args.command, exit_code=exc.exit_code, **exc.to_dict())
        return exc.exit_code
    return 0
