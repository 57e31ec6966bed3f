"""
Artifact Emission

Writes plot data (CSV), summaries (JSON) and the run manifest into one
directory per subcommand run. Floats are written with repr so that values
round-trip exactly; nothing time-dependent enters any file, which keeps
re-runs from a manifest byte-identical.
"""

import csv
import hashlib
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Union

import numpy as np
import structlog
from pydantic import BaseModel, RootModel

from app import __version__
from app.control.closed_loop import RolloutBatch
from app.control.policy import GainSchedule
from app.core.config import ExperimentConfig
from app.models.enums import OutputFormat
from app.models.reports import RunManifest
from app.solvers.riccati import RiccatiSolution

logger = structlog.get_logger(__name__)

PACKAGE_ROOT = Path(__file__).resolve().parents[1]


def build_id() -> str:
    """v<version>-<first 8 hex digits of the sha256 over the package sources>"""
    digest = hashlib.sha256()
    for path in sorted(PACKAGE_ROOT.rglob("*.py")):
        digest.update(path.relative_to(PACKAGE_ROOT).as_posix().encode("utf-8"))
        digest.update(path.read_bytes())
    return f"v{__version__}-{digest.hexdigest()[:8]}"


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _vec_header(prefix: str, rows: int, cols: int) -> List[str]:
    return [f"{prefix}_{i}{j}" for i in range(rows) for j in range(cols)]


def riccati_header(sol: RiccatiSolution) -> List[str]:
    d = sol.d
    return ["t"] + _vec_header("P", d, d) + ["g"] + _vec_header("S", d, d)


def riccati_rows(sol: RiccatiSolution) -> List[list]:
    """t, vec(P_t), g_t, vec(S_t)"""
    return [
        [float(t)] + sol.P[k].ravel().tolist() + [float(sol.g[k])] + sol.S[k].ravel().tolist()
        for k, t in enumerate(sol.time_grid)
    ]


def schedule_header(schedule: GainSchedule) -> List[str]:
    d = schedule.ktildes.shape[1]
    header = ["t"] + _vec_header("Ktilde", d, d)
    if schedule.gains is not None:
        header += _vec_header("K", *schedule.gains.shape[1:])
    return header


def schedule_rows(schedule: GainSchedule) -> List[list]:
    """t, vec(K~_t) and, when B is known, vec(K_t)"""
    rows = []
    for k, t in enumerate(schedule.time_grid):
        row = [float(t)] + schedule.ktildes[k].ravel().tolist()
        if schedule.gains is not None:
            row += schedule.gains[k].ravel().tolist()
        rows.append(row)
    return rows


def comparison_header(d: int) -> List[str]:
    return ["t"] + _vec_header("S_enkf", d, d) + _vec_header("S_dre", d, d)


def comparison_rows(time_grid: np.ndarray, S_enkf: np.ndarray, S_dre: np.ndarray) -> List[list]:
    """t, vec(S^(N)_t), vec(S_t) on a shared grid"""
    return [
        [float(t)] + S_enkf[k].ravel().tolist() + S_dre[k].ravel().tolist()
        for k, t in enumerate(time_grid)
    ]


def rollout_header(batch: RolloutBatch) -> List[str]:
    d = batch.states.shape[2]
    m = batch.controls.shape[2]
    return ["rollout", "t"] + [f"x_{i}" for i in range(d)] + [f"u_{j}" for j in range(m)]


def rollout_rows(batch: RolloutBatch, limit: Optional[int] = None) -> List[list]:
    """
    rollout, t, x..., u... per grid time. The control applied on [t_k, t_k+1)
    sits on row k; the final row carries no control.
    """
    n = batch.M if limit is None else min(limit, batch.M)
    m = batch.controls.shape[2]
    n_steps = batch.controls.shape[1]
    rows = []
    for i in range(n):
        for k, t in enumerate(batch.time_grid):
            u = batch.controls[i, k].tolist() if k < n_steps else [None] * m
            rows.append([i, float(t)] + batch.states[i, k].tolist() + u)
    return rows


class ArtifactWriter:
    """
    Output directory for one run.

    Files land in <root>/<command>/.
    The preferred format selects CSV or JSON for tabular data; summaries are
    always JSON.
    """

    def __init__(self, root: Union[str, Path], command: str, fmt: OutputFormat = OutputFormat.CSV):
        self.directory = Path(root) / command
        self.command = command
        self.format = OutputFormat(fmt)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []

    def path(self, name: str) -> Path:
        return self.directory / name

    def write_table(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        """Tabular data as <name>.csv, or <name>.json (list of records) when the format is JSON"""
        if self.format == OutputFormat.JSON:
            records = [dict(zip(header, row)) for row in rows]
            return self._write_text(f"{name}.json", _json_dumps(records))
        return self.write_csv(f"{name}.csv", header, rows)

    def write_csv(self, filename: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        path = self.path(filename)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        self._record(path)
        return path

    def write_json(self, filename: str, payload: Union[BaseModel, list, dict]) -> Path:
        if isinstance(payload, BaseModel):
            text = payload.model_dump_json(indent=2)
        else:
            text = _json_dumps(payload)
        return self._write_text(filename, text)

    def write_manifest(self, cfg: ExperimentConfig) -> Path:
        manifest = RunManifest(
            command=self.command,
            seed=cfg.solver.seed,
            build_id=build_id(),
            config=cfg.model_dump(mode="json"),
        )
        return self.write_json("manifest.json", manifest)

    def _write_text(self, filename: str, text: str) -> Path:
        path = self.path(filename)
        path.write_text(text + "\n", encoding="utf-8")
        self._record(path)
        return path

    def _record(self, path: Path) -> None:
        self.written.append(path)
        logger.debug("artifact_written", path=str(path))


def _json_dumps(payload: Union[list, dict]) -> str:
    return RootModel[Any](payload).model_dump_json(indent=2)
