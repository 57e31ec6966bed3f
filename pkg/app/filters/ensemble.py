"""
Ensemble Types

Particle ensembles, their sample statistics and the recorded trajectory of
statistics produced by a backward run.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.exceptions import DomainError, InsufficientParticlesError, ShapeError
from app.core.linalg import symmetrize
from app.models.enums import EtaConvention, Prop2Mode, SnapshotMode


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Ensemble mean n and unbiased sample covariance S"""

    n: np.ndarray
    S: np.ndarray

    @property
    def d(self) -> int:
        return self.n.shape[0]


def ensemble_stats(ens: "Ensemble") -> EnsembleStats:
    """
    Mean and 1/(N-1) sample covariance of the particles.

    Raises:
        InsufficientParticlesError: N < 2
    """
    Y = ens.particles
    N = Y.shape[0]
    if N < 2:
        raise InsufficientParticlesError(N, 2)
    n = Y.mean(axis=0)
    Yc = Y - n
    S = symmetrize(Yc.T @ Yc / (N - 1))
    return EnsembleStats(n=n, S=S)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """N particles of dimension d at time t"""

    particles: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        Y = np.array(self.particles, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.ndim != 2:
            raise ShapeError("particles", expected="(N, d)", actual=Y.shape)
        N, d = Y.shape
        if N < d + 1:
            raise InsufficientParticlesError(N, d + 1)
        if not np.all(np.isfinite(Y)):
            raise DomainError("particles", message="Ensemble contains non-finite entries")
        Y.setflags(write=False)
        object.__setattr__(self, "particles", Y)
        object.__setattr__(self, "t", float(self.t))

    @property
    def N(self) -> int:
        return self.particles.shape[0]

    @property
    def d(self) -> int:
        return self.particles.shape[1]

    @cached_property
    def stats(self) -> EnsembleStats:
        return ensemble_stats(self)


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Exploration noise covariance and which stochastic terms are active"""

    eta_cov: np.ndarray
    use_process_noise: bool = True
    correction_active: bool = True
    source: str = "table"

    def __post_init__(self):
        cov = np.atleast_2d(np.array(self.eta_cov, dtype=float))
        if cov.shape[0] != cov.shape[1]:
            raise ShapeError("eta_cov", expected="square", actual=cov.shape)
        cov = symmetrize(cov)
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.min(np.linalg.eigvalsh(cov)) < -1e-12 * scale:
            raise DomainError("eta_cov", message="Exploration noise covariance must be positive semi-definite")
        cov.setflags(write=False)
        object.__setattr__(self, "eta_cov", cov)

    @property
    def eta_active(self) -> bool:
        return bool(np.any(self.eta_cov != 0.0))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eta_cov": self.eta_cov.tolist(),
            "use_process_noise": self.use_process_noise,
            "correction_active": self.correction_active,
            "source": self.source,
        }


class EnkfOptions(BaseModel):
    """Run options shared by the LQ and Gaussian-approximation filters"""

    model_config = ConfigDict(frozen=True)

    prop2: Prop2Mode = Field(default=Prop2Mode.OFF, description="Use the reduced-noise configuration when it applies")
    snapshots: SnapshotMode = Field(default=SnapshotMode.STATS, description="What is recorded per grid time")
    eta_convention: EtaConvention = Field(default=EtaConvention.CONSISTENT)


@dataclass(frozen=True, eq=False)
class EnsembleTrajectory:
    """
    Recorded output of a backward run, stored on an increasing time grid.

    means has shape (K+1, d), covariances (K+1, d, d), snapshots (K+1, N, d)
    when recorded. With SnapshotMode.NONE only t = 0 is kept.
    """

    time_grid: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    snapshots: Optional[np.ndarray] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        K = len(self.time_grid)
        if self.means.shape[0] != K or self.covariances.shape[0] != K:
            raise ShapeError("trajectory", expected=K, actual=(self.means.shape[0], self.covariances.shape[0]))

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def index(self, t: float) -> int:
        """Most recent grid index with time_grid[k] <= t"""
        k = int(np.searchsorted(self.time_grid, t + 1e-12, side="right")) - 1
        return min(max(k, 0), len(self.time_grid) - 1)

    def stats_at(self, k: int) -> EnsembleStats:
        return EnsembleStats(n=self.means[k], S=self.covariances[k])

    def at(self, t: float) -> EnsembleStats:
        return self.stats_at(self.index(t))

    @property
    def S0(self) -> np.ndarray:
        return self.covariances[0]

    @property
    def n0(self) -> np.ndarray:
        return self.means[0]

    def header(self) -> List[str]:
        d = self.d
        return ["t"] + [f"n_{i}" for i in range(d)] + [f"S_{i}{j}" for i in range(d) for j in range(d)]

    def to_rows(self) -> List[List[float]]:
        """One row per grid time: t, vec(n), vec(S) (row-major)"""
        return [
            [float(t)] + self.means[k].tolist() + self.covariances[k].ravel().tolist()
            for k, t in enumerate(self.time_grid)
        ]
