"""
Closed-Loop Simulation and Cost Estimation

Forward Euler-Maruyama rollouts of dX = (a(X) + b(X)U)dt + sigma(X)dW under a
policy, with left-endpoint quadrature of the running cost, and Monte-Carlo
estimates of the SOC and RSC objectives.
"""

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import structlog
from pydantic import BaseModel
from scipy.special import logsumexp

from app.control.policy import Policy
from app.core.exceptions import CostOverflowError, DivergenceError, DomainError, ShapeError
from app.core.rng import Stream, normal_block
from app.models.system import CostSpec, Objective, SystemModel
from app.solvers.riccati import make_grid

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    One rollout: states (K+1, d), controls (K, m) applied on each interval,
    realized running cost integral and terminal cost.
    """

    time_grid: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    running_cost: float
    terminal_cost: float

    @property
    def total_cost(self) -> float:
        return self.running_cost + self.terminal_cost


@dataclass(frozen=True, eq=False)
class RolloutBatch:
    """M rollouts simulated in lockstep"""

    time_grid: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    running_costs: np.ndarray
    terminal_costs: np.ndarray

    @property
    def M(self) -> int:
        return self.states.shape[0]

    @property
    def total_costs(self) -> np.ndarray:
        return self.running_costs + self.terminal_costs

    @property
    def final_states(self) -> np.ndarray:
        return self.states[:, -1, :]

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(
            time_grid=self.time_grid,
            states=self.states[i],
            controls=self.controls[i],
            running_cost=float(self.running_costs[i]),
            terminal_cost=float(self.terminal_costs[i]),
        )


class CostEstimate(BaseModel):
    """Monte-Carlo estimate of an objective"""

    value: float
    stderr: float
    M: int
    theta: Optional[float] = None
    kind: str = "soc"


def simulate_batch(
    model: SystemModel,
    cost: CostSpec,
    policy: Policy,
    X0: np.ndarray,
    T: float,
    dt: float,
    seed: int,
) -> RolloutBatch:
    """
    Forward Euler-Maruyama for M initial states X0 of shape (M, d).

    Rollout i uses row i of each step's noise block.

    Raises:
        DivergenceError: a state became non-finite
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if X0.shape[1] != model.d:
        raise ShapeError("x0", expected=("M", model.d), actual=X0.shape)
    grid = make_grid(T, dt)
    h = grid[1] - grid[0]
    n_steps = len(grid) - 1
    M = X0.shape[0]

    states = np.empty((M, n_steps + 1, model.d))
    controls = np.empty((M, n_steps, model.m))
    running = np.zeros(M)
    states[:, 0] = X0

    X = X0.copy()
    sqrt_h = np.sqrt(h)
    for k in range(n_steps):
        t = float(grid[k])
        U = np.asarray(policy(t, X), dtype=float).reshape(M, model.m)
        running += cost.running(X, U) * h
        dW = normal_block(seed, Stream.ROLLOUT, k, M, model.d_w) * sqrt_h
        X = X + h * model.controlled_drift(X, U) + np.einsum("nij,nj->ni", model.sigma(X), dW)
        if not np.all(np.isfinite(X)):
            raise DivergenceError(k + 1, float(grid[k + 1]), message=f"Non-finite state at t={grid[k + 1]:.6g}")
        controls[:, k] = U
        states[:, k + 1] = X

    terminal = np.asarray(cost.terminal(X), dtype=float).reshape(M)
    return RolloutBatch(
        time_grid=grid,
        states=states,
        controls=controls,
        running_costs=running,
        terminal_costs=terminal,
    )


def simulate_closed_loop(
    model: SystemModel,
    cost: CostSpec,
    policy: Policy,
    x0: np.ndarray,
    T: float,
    dt: float,
    seed: int,
) -> Trajectory:
    """Single rollout; the M = 1 case of simulate_batch"""
    return simulate_batch(model, cost, policy, np.asarray(x0, dtype=float)[None, :], T, dt, seed).trajectory(0)


def initial_states(x0: np.ndarray, M: int, spread: float, seed: int) -> np.ndarray:
    """M copies of x0 perturbed by N(0, spread^2 I)"""
    x0 = np.asarray(x0, dtype=float)
    noise = normal_block(seed, Stream.ROLLOUT_INIT, 0, M, x0.shape[0])
    return x0 + spread * noise


def rsc_functional(J: np.ndarray, theta: float) -> float:
    """theta^-1 log mean exp(theta J), evaluated with max subtraction"""
    J = np.asarray(J, dtype=float)
    if theta == 0:
        raise DomainError("theta", theta, message="RSC functional requires theta != 0")
    return float((logsumexp(theta * J) - np.log(J.size)) / theta)


def _rsc_stderr(J: np.ndarray, theta: float) -> float:
    z = theta * J
    w = np.exp(z - np.max(z))
    return float(abs(1.0 / theta) * np.std(w, ddof=1) / (np.sqrt(J.size) * np.mean(w)))


def cost_from_samples(J: np.ndarray, obj: Objective) -> CostEstimate:
    """SOC mean with standard error, or the RSC log-mean-exp with delta-method error"""
    J = np.asarray(J, dtype=float)
    M = J.size
    if M < 2:
        raise DomainError("M", M, message="At least two rollouts are required")
    if not np.all(np.isfinite(J)):
        finite = J[np.isfinite(J)]
        raise CostOverflowError(obj.theta, float(finite.max()) if finite.size else float("inf"))

    if not obj.is_rsc:
        return CostEstimate(value=float(J.mean()), stderr=float(J.std(ddof=1) / np.sqrt(M)), M=M, kind="soc")

    value = rsc_functional(J, obj.theta)
    if not np.isfinite(value):
        raise CostOverflowError(obj.theta, float(J.max()))
    return CostEstimate(value=value, stderr=_rsc_stderr(J, obj.theta), M=M, theta=obj.theta, kind="rsc")


def estimate_cost(
    model: SystemModel,
    cost: CostSpec,
    policy: Policy,
    x0: np.ndarray,
    T: float,
    dt: float,
    M: int,
    obj: Objective,
    seed: int,
    init_spread: float = 0.0,
) -> CostEstimate:
    """
    Monte-Carlo estimate of J^SOC or J^RSC over M rollouts from x0.

    Raises:
        DomainError: M < 2
        CostOverflowError: realized costs are not finite
        DivergenceError: a rollout became non-finite
    """
    if M < 2:
        raise DomainError("M", M, message="At least two rollouts are required")
    X0 = initial_states(x0, M, init_spread, seed)
    batch = simulate_batch(model, cost, policy, X0, T, dt, seed)
    estimate = cost_from_samples(batch.total_costs, obj)
    logger.info("cost_estimated", kind=estimate.kind, value=estimate.value, stderr=estimate.stderr, M=M)
    return estimate


def wrapped_difference(angle: np.ndarray, reference: float) -> np.ndarray:
    """angle - reference mapped to (-pi, pi]"""
    return np.angle(np.exp(1j * (np.asarray(angle, dtype=float) - reference)))


def stabilization_fraction(
    final_states: np.ndarray,
    target: np.ndarray,
    tolerances: Dict[int, float],
    angular: Optional[Dict[int, bool]] = None,
) -> float:
    """
    Fraction of rollouts whose final state is within tolerance of the target
    on every listed coordinate. Coordinates flagged in `angular` are compared
    modulo 2 pi.
    """
    final_states = np.atleast_2d(final_states)
    target = np.asarray(target, dtype=float)
    angular = angular or {}
    ok = np.ones(final_states.shape[0], dtype=bool)
    for idx, tol in tolerances.items():
        if angular.get(idx, False):
            err = wrapped_difference(final_states[:, idx], target[idx])
        else:
            err = final_states[:, idx] - target[idx]
        ok &= np.abs(err) < tol
    return float(ok.mean())
