"""
Policy Extraction

Turns ensemble output into feedback laws:

- ktilde: whitened second moment K~ = 1/((N-1) kappa) sum X^i X^i^T with
  X^i = S^-1 (Y^i - n), an estimate of P_t
- gain_known_b: K = -R^-1 B^T K~ when B is known
- gain_model_free: minimizer of the Hamiltonian recovered from m + 1 oracle
  queries when B is unknown

Policies act in original coordinates and feed back the error x - target.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np
import structlog

from app.core.exceptions import DomainError, OracleError, ShapeError
from app.core.linalg import inverse_pd, regularized_solve, symmetrize
from app.core.rng import Stream, normal_block
from app.filters.ensemble import Ensemble, EnsembleStats, EnsembleTrajectory
from app.models.enums import GainMode
from app.models.system import CostSpec, LtiSystem, Objective, SystemModel
from app.solvers.riccati import RiccatiSolution

logger = structlog.get_logger(__name__)


def ktilde(ens: Ensemble, stats: EnsembleStats, obj: Objective) -> np.ndarray:
    """
    Whitened empirical second moment of the particles.

    Raises:
        SingularCovarianceError: S stays singular after jitter escalation
    """
    Yc = ens.particles - stats.n
    X = regularized_solve(stats.S, Yc.T).T
    return symmetrize(X.T @ X / ((ens.N - 1) * obj.kappa))


def ktilde_from_covariance(S: np.ndarray, obj: Objective) -> np.ndarray:
    """S^-1 / kappa; equals ktilde(ens, stats, obj) for the ensemble that produced S"""
    return inverse_pd(S, name="S") / obj.kappa


def gain_known_b(ktilde_matrix: np.ndarray, lti: LtiSystem, cost: CostSpec) -> np.ndarray:
    """K = -R^-1 B^T K~, shape (m, d)"""
    return -cost.solve_R(lti.B.T @ ktilde_matrix)


@dataclass
class GainSchedule:
    """
    Per-grid-time K~ (d x d) and, when B is known, K (m x d).

    Lookup between grid times is a zero-order hold at the most recent grid
    time <= t; times past the grid hold the last entry.
    """

    time_grid: np.ndarray
    ktildes: np.ndarray
    gains: Optional[np.ndarray] = None
    source: str = "enkf"

    def __post_init__(self):
        self.time_grid = np.asarray(self.time_grid, dtype=float)
        if self.ktildes.shape[0] != len(self.time_grid):
            raise ShapeError("ktildes", expected=len(self.time_grid), actual=self.ktildes.shape[0])
        if self.gains is not None and self.gains.shape[0] != len(self.time_grid):
            raise ShapeError("gains", expected=len(self.time_grid), actual=self.gains.shape[0])

    @classmethod
    def from_trajectory(
        cls,
        traj: EnsembleTrajectory,
        obj: Objective,
        lti: LtiSystem = None,
        cost: CostSpec = None,
    ) -> "GainSchedule":
        kt = np.stack([ktilde_from_covariance(S, obj) for S in traj.covariances])
        gains = None
        if lti is not None and cost is not None:
            gains = np.stack([gain_known_b(k, lti, cost) for k in kt])
        return cls(time_grid=traj.time_grid, ktildes=kt, gains=gains, source="enkf")

    @classmethod
    def stationary_from_trajectory(
        cls,
        traj: EnsembleTrajectory,
        obj: Objective,
        window: float,
        lti: LtiSystem = None,
        cost: CostSpec = None,
    ) -> "GainSchedule":
        """
        Constant schedule from the mean covariance over grid times t <= window.

        The covariances are averaged first and inverted once.

        Raises:
            DomainError: negative window
        """
        if window < 0.0:
            raise DomainError("window", window, message="Averaging window must be non-negative")
        mask = traj.time_grid <= window + 1e-12
        S_bar = symmetrize(traj.covariances[mask].mean(axis=0))
        kt = ktilde_from_covariance(S_bar, obj)
        gains = None
        if lti is not None and cost is not None:
            gains = gain_known_b(kt, lti, cost)[None]
        logger.debug("stationary_gain_averaged", window=window, grid_points=int(mask.sum()))
        return cls(time_grid=np.zeros(1), ktildes=kt[None], gains=gains, source="enkf-stationary")

    @classmethod
    def from_riccati(cls, sol: RiccatiSolution, lti: LtiSystem, cost: CostSpec) -> "GainSchedule":
        """Reference schedule with K~ = P_t"""
        return cls(time_grid=sol.time_grid, ktildes=sol.P.copy(), gains=sol.gains(lti, cost), source="riccati")

    @classmethod
    def constant(cls, gain: np.ndarray, ktilde_matrix: np.ndarray = None, source: str = "constant") -> "GainSchedule":
        gain = np.atleast_2d(gain)
        d = gain.shape[1]
        kt = np.zeros((d, d)) if ktilde_matrix is None else ktilde_matrix
        return cls(time_grid=np.zeros(1), ktildes=kt[None], gains=gain[None], source=source)

    def index(self, t: float) -> int:
        k = int(np.searchsorted(self.time_grid, t + 1e-12, side="right")) - 1
        return min(max(k, 0), len(self.time_grid) - 1)

    def ktilde_at(self, t: float) -> np.ndarray:
        return self.ktildes[self.index(t)]

    def gain_at(self, t: float) -> np.ndarray:
        if self.gains is None:
            raise DomainError("gains", message="Schedule has no known-B gains")
        return self.gains[self.index(t)]

    def stationary(self) -> "GainSchedule":
        """The t = 0 entry held for all times"""
        return GainSchedule(
            time_grid=np.zeros(1),
            ktildes=self.ktildes[:1].copy(),
            gains=None if self.gains is None else self.gains[:1].copy(),
            source=f"{self.source}-stationary",
        )

    def with_mode(self, mode: GainMode) -> "GainSchedule":
        return self.stationary() if GainMode(mode) == GainMode.STATIONARY else self


class ModelSimulator:
    """
    One-step Euler-Maruyama drift estimator for a (black-box) model.

    estimate(x, alpha, t) averages (X_{t+h} - x)/h over n_samples simulated
    steps. Queries at the same (x, t) reuse the same noise draws, so two
    queries differing only in alpha differ by b(x)(alpha - alpha') exactly.
    With exact=True the drift is returned without simulation.
    """

    def __init__(self, model: SystemModel, step: float, n_samples: int = 100, seed: int = 0, exact: bool = False):
        if step <= 0:
            raise DomainError("step", step, message="Simulator step must be positive")
        if n_samples < 1:
            raise DomainError("n_samples", n_samples, message="n_samples must be at least 1")
        self.model = model
        self.step = step
        self.n_samples = n_samples
        self.seed = seed
        self.exact = exact

    def estimate(self, x: np.ndarray, alpha: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        drift = self.model.controlled_drift(x, alpha)
        if self.exact:
            return drift
        draws = normal_block(self.seed, Stream.ORACLE, int(round(t / self.step)), self.n_samples, self.model.d_w)
        dW = draws * np.sqrt(self.step)
        X_next = x + self.step * drift + dW @ np.asarray(self.model.sigma(x)).T
        return (X_next - x).mean(axis=0) / self.step


@dataclass
class HamiltonianOracle:
    """
    H(x, alpha, t) = 1/2 |c(x)|^2 + 1/2 alpha^T R alpha + (K~ x)^T f(x, alpha, t)

    where f is the simulator's drift estimate. The query counter increments by
    one per evaluation.
    """

    simulator: ModelSimulator
    cost: CostSpec
    query_count: int = 0

    @property
    def n_samples(self) -> int:
        return self.simulator.n_samples

    def query(self, x: np.ndarray, alpha: np.ndarray, t: float, ktilde_matrix: np.ndarray) -> float:
        self.query_count += 1
        x = np.asarray(x, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        cx = self.cost.c(x)
        f = self.simulator.estimate(x, alpha, t)
        value = 0.5 * float(cx @ cx) + 0.5 * float(alpha @ self.cost.R @ alpha) + float((ktilde_matrix @ x) @ f)
        if not np.isfinite(value):
            raise OracleError(f"x={x.tolist()}, alpha={alpha.tolist()}, t={t}")
        return value


def gain_model_free(
    x: np.ndarray,
    ktilde_matrix: np.ndarray,
    oracle: HamiltonianOracle,
    cost: CostSpec,
    t: float,
) -> np.ndarray:
    """
    alpha* = -R^-1 l with l_j = H(x, e_j) - H(x, 0) - R_jj / 2.

    Uses m + 1 queries: the alpha = 0 baseline plus one per unit direction.

    Raises:
        OracleError: the oracle returned a non-finite value
    """
    x = np.asarray(x, dtype=float)
    m = cost.m
    base = oracle.query(x, np.zeros(m), t, ktilde_matrix)
    linear = np.empty(m)
    for j in range(m):
        e_j = np.zeros(m)
        e_j[j] = 1.0
        linear[j] = oracle.query(x, e_j, t, ktilde_matrix) - base - 0.5 * cost.R[j, j]
    if not np.all(np.isfinite(linear)):
        raise OracleError(f"x={x.tolist()}, t={t}")
    return -cost.solve_R(linear)


class Policy(ABC):
    """Feedback law evaluated on a batch of states"""

    @abstractmethod
    def __call__(self, t: float, X: np.ndarray) -> np.ndarray:
        """Controls for states X of shape (M, d), returned as (M, m)"""


class ZeroPolicy(Policy):
    """Uncontrolled baseline"""

    def __init__(self, m: int):
        self.m = m

    def __call__(self, t: float, X: np.ndarray) -> np.ndarray:
        return np.zeros((np.shape(X)[0], self.m))


class LinearPolicy(Policy):
    """u = K_t (x - target) with zero-order-held gains"""

    def __init__(self, schedule: GainSchedule, target: np.ndarray = None):
        if schedule.gains is None:
            raise DomainError("gains", message="LinearPolicy needs a schedule with known-B gains")
        self.schedule = schedule
        self.target = None if target is None else np.asarray(target, dtype=float)

    def __call__(self, t: float, X: np.ndarray) -> np.ndarray:
        E = np.asarray(X, dtype=float)
        if self.target is not None:
            E = E - self.target
        return E @ self.schedule.gain_at(t).T


class HamiltonianPolicy(Policy):
    """Model-free policy: gain_model_free per state, in error coordinates"""

    def __init__(self, schedule: GainSchedule, oracle: HamiltonianOracle, cost: CostSpec, target: np.ndarray = None):
        self.schedule = schedule
        self.oracle = oracle
        self.cost = cost
        self.target = None if target is None else np.asarray(target, dtype=float)

    def __call__(self, t: float, X: np.ndarray) -> np.ndarray:
        E = np.atleast_2d(np.asarray(X, dtype=float))
        if self.target is not None:
            E = E - self.target
        kt = self.schedule.ktilde_at(t)
        return np.stack([gain_model_free(e, kt, self.oracle, self.cost, t) for e in E])
