"""
Base Filter Abstract Class

This module defines the abstract base class shared by the backward-in-time
ensemble filters. It owns everything that does not depend on the vector fields:

- terminal sampling from N(0, S_T)
- the reversed-time Euler-Maruyama step
- deterministic per-step noise blocks
- recording ensemble statistics along the grid

Subclasses supply the drift (model drift plus interaction and correction fields),
the input map multiplying the exploration noise and the diffusion.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, List

import numpy as np
import structlog

from app.core.exceptions import DivergenceError, DomainError
from app.core.linalg import psd_sqrt
from app.core.rng import Stream, normal_block
from app.filters.ensemble import Ensemble, EnkfOptions, EnsembleStats, EnsembleTrajectory, NoiseSpec
from app.models.enums import SnapshotMode
from app.models.system import CostSpec, Objective
from app.solvers.riccati import make_grid, s_from_p

logger = structlog.get_logger(__name__)


def sample_terminal(obj: Objective, cost: CostSpec, N: int, rng_seed: int, T: float = 0.0) -> Ensemble:
    """
    i.i.d. draws Y^i_T ~ N(0, S_T) with S_T = G^{-1} (SOC) or (|theta| G)^{-1} (RSC).

    Raises:
        DomainError: terminal cost is not quadratic
        SingularityError: G is singular
        InsufficientParticlesError: N < d + 1
    """
    if cost.G is None or cost.terminal_fn is not None:
        raise DomainError("G", message="Terminal sampling requires a quadratic terminal cost")
    S_T = s_from_p(obj, cost.G)
    L = np.linalg.cholesky(S_T)
    Z = normal_block(rng_seed, Stream.TERMINAL, 0, N, S_T.shape[0])
    return Ensemble(particles=Z @ L.T, t=T)


class BackwardEnsembleFilter(ABC):
    """
    Abstract base class for backward-time controlled interacting particle systems.

    One step from t to t - dt reads

        Y <- Y - dt * drift(Y) - b(Y) d_eta - sigma(Y) dW

    where the drift is evaluated with the statistics of the pre-step ensemble,
    d_eta ~ N(0, eta_cov dt) and dW ~ N(0, I dt).
    """

    def __init__(self, cost: CostSpec, obj: Objective, noise: NoiseSpec, options: EnkfOptions = None):
        self.cost = cost
        self.obj = obj
        self.noise = noise
        self.options = options or EnkfOptions()
        self._eta_root = psd_sqrt(noise.eta_cov) if noise.eta_active else None

    @property
    @abstractmethod
    def d(self) -> int:
        """State dimension"""

    @property
    @abstractmethod
    def d_w(self) -> int:
        """Process noise dimension"""

    @abstractmethod
    def drift(self, Y: np.ndarray, stats: EnsembleStats) -> np.ndarray:
        """
        Total deterministic drift for every particle, shape (N, d).

        Args:
            Y: particles at the current time
            stats: statistics of Y, frozen for the step
        """

    @abstractmethod
    def input_map(self, Y: np.ndarray) -> np.ndarray:
        """b evaluated per particle, shape (N, d, m)"""

    @abstractmethod
    def diffusion(self, Y: np.ndarray) -> np.ndarray:
        """sigma evaluated per particle, shape (N, d, d_w)"""

    def metadata(self) -> Dict[str, Any]:
        return {
            "objective": self.obj.to_dict(),
            "noise": self.noise.to_dict(),
            "eta_convention": str(self.options.eta_convention),
        }

    def step(self, ens: Ensemble, dt: float, step_index: int, seed: int, t_next: float = None) -> Ensemble:
        """
        One reversed-time Euler-Maruyama step.

        Raises:
            DivergenceError: a particle became non-finite
        """
        Y = ens.particles
        N = ens.N
        Y_new = Y - dt * self.drift(Y, ens.stats)

        sqrt_dt = np.sqrt(dt)
        if self._eta_root is not None:
            m = self._eta_root.shape[0]
            d_eta = normal_block(seed, Stream.INPUT_NOISE, step_index, N, m) @ self._eta_root.T * sqrt_dt
            Y_new -= np.einsum("nij,nj->ni", self.input_map(Y), d_eta)
        if self.noise.use_process_noise:
            dW = normal_block(seed, Stream.PROCESS_NOISE, step_index, N, self.d_w) * sqrt_dt
            Y_new -= np.einsum("nij,nj->ni", self.diffusion(Y), dW)

        if not np.all(np.isfinite(Y_new)):
            raise DivergenceError(step_index, ens.t)
        return Ensemble(particles=Y_new, t=ens.t - dt if t_next is None else t_next)

    def run(self, T: float, dt: float, N: int, seed: int) -> EnsembleTrajectory:
        """Terminal sampling then backward stepping from T to 0"""
        grid = make_grid(T, dt)
        h = grid[1] - grid[0]
        n_steps = len(grid) - 1
        mode = SnapshotMode(self.options.snapshots)

        ens = self.initial_ensemble(N, seed, T)
        means: List[np.ndarray] = [None] * (n_steps + 1)
        covs: List[np.ndarray] = [None] * (n_steps + 1)
        snaps: List[np.ndarray] = [None] * (n_steps + 1)

        for k in range(n_steps, 0, -1):
            if mode != SnapshotMode.NONE:
                means[k], covs[k] = ens.stats.n, ens.stats.S
            if mode == SnapshotMode.FULL:
                snaps[k] = ens.particles
            ens = self.step(ens, h, k, seed, t_next=float(grid[k - 1]))

        means[0], covs[0] = ens.stats.n, ens.stats.S
        snaps[0] = ens.particles

        meta = {"N": N, "seed": seed, "T": T, "dt": dt, **self.metadata()}
        logger.info(
            "ensemble_run_complete",
            filter=type(self).__name__,
            variant=str(self.obj.variant),
            N=N,
            steps=n_steps,
            seed=seed,
            trace_S0=float(np.trace(covs[0])),
        )

        if mode == SnapshotMode.NONE:
            return EnsembleTrajectory(
                time_grid=grid[:1],
                means=np.stack(means[:1]),
                covariances=np.stack(covs[:1]),
                meta=meta,
            )
        return EnsembleTrajectory(
            time_grid=grid,
            means=np.stack(means),
            covariances=np.stack(covs),
            snapshots=np.stack(snaps) if mode == SnapshotMode.FULL else None,
            meta=meta,
        )

    def initial_ensemble(self, N: int, seed: int, T: float) -> Ensemble:
        return sample_terminal(self.obj, self.cost, N, seed, T=T)
