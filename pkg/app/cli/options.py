"""
Shared command-line flags.

Flags default to None so that only the ones actually given become overrides;
everything else falls through to the config file and then to the defaults.
"""

import argparse
from pathlib import Path
from typing import Any, Dict

from app.models.enums import ObjectiveKind, OutputFormat, Prop2Mode, SnapshotMode, SystemPreset


def _choices(enum_cls) -> list:
    return [member.value for member in enum_cls]


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    """--config, --manifest, --output, --format, --seed, --log-level"""
    parser.add_argument("--config", type=Path, help="TOML experiment configuration")
    parser.add_argument("--manifest", type=Path, help="Re-run from a manifest.json written by an earlier run")
    parser.add_argument("--output", help="Output root directory")
    parser.add_argument("--format", choices=_choices(OutputFormat), help="Tabular output format")
    parser.add_argument("--seed", type=int, help="Root seed")
    parser.add_argument("--log-level", dest="log_level", help="Overrides LOG_LEVEL")


def add_solver_arguments(parser: argparse.ArgumentParser, system: bool = True) -> None:
    """System, objective and filter flags shared by the solver subcommands"""
    if system:
        parser.add_argument("--system", choices=_choices(SystemPreset), help="Model preset")
    parser.add_argument("--objective", choices=_choices(ObjectiveKind), help="soc or rsc")
    parser.add_argument("--theta", type=float, help="Risk parameter for rsc")
    parser.add_argument("-N", dest="N", type=int, help="Particle count")
    parser.add_argument("--dt", type=float, help="Time step")
    parser.add_argument("-T", dest="T", type=float, help="Horizon")
    parser.add_argument("--prop2", choices=_choices(Prop2Mode), help="Reduced-noise configuration")
    parser.add_argument("--snapshots", choices=_choices(SnapshotMode), help="What is recorded per grid time")


def set_override(tree: Dict[str, Any], dotted: str, value: Any) -> None:
    """Place value at a dotted path of a nested dict unless it is None"""
    if value is None:
        return
    *parents, leaf = dotted.split(".")
    node = tree
    for key in parents:
        node = node.setdefault(key, {})
    node[leaf] = value


FLAG_PATHS = {
    "output": "output.directory",
    "format": "output.format",
    "seed": "solver.seed",
    "system": "system.preset",
    "objective": "objective.kind",
    "theta": "objective.theta",
    "N": "solver.N",
    "dt": "solver.dt",
    "T": "solver.T",
    "prop2": "solver.prop2",
    "snapshots": "solver.snapshots",
}


def collect_overrides(args: argparse.Namespace, extra_paths: Dict[str, str] = None) -> Dict[str, Any]:
    """Nested override dict from the flags present on args"""
    tree: Dict[str, Any] = {}
    for flag, dotted in {**FLAG_PATHS, **(extra_paths or {})}.items():
        set_override(tree, dotted, getattr(args, flag, None))
    return tree
