"""
Riccati Reference Solver

Backward integration of the differential Riccati equation (DRE) for the value
function curvature P_t, its offset g_t, and the dual DRE for S_t, plus the
stationary (algebraic) limit obtained by relaxation.

With tau = T - t running forward from the terminal time:

    dP/dtau =  D(P)        P(tau=0) = G
    dg/dtau =  tr(Sigma P) g(tau=0) = 0
    dS/dtau = -D_dual(S)   S(tau=0) = (kappa G)^{-1}

where kappa = 1 (SOC) or |theta| (RSC). All steps are classical RK4 on a fixed
grid with explicit symmetrization after every step.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
import structlog

from app.core.exceptions import DomainError, IntegrationBlowupError, NonConvergenceError, ShapeError
from app.core.linalg import inverse_pd, is_positive_definite, symmetrize
from app.models.enums import DualMode
from app.models.system import CostSpec, LtiSystem, Objective, check_lq_shapes, ensure_lq_assumptions

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """P_t, g_t and S_t on an increasing grid over [0, T]"""

    time_grid: np.ndarray
    P: np.ndarray
    g: np.ndarray
    S: np.ndarray
    objective: Objective

    @property
    def d(self) -> int:
        return self.P.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.time_grid[-1])

    def index(self, t: float) -> int:
        """Most recent grid index with time_grid[k] <= t"""
        k = int(np.searchsorted(self.time_grid, t + 1e-12, side="right")) - 1
        return min(max(k, 0), len(self.time_grid) - 1)

    def value(self, x: np.ndarray, k: int) -> np.ndarray:
        """v_t(x) = 1/2 x^T P_t x + g_t at grid index k"""
        x = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.P[k], x) + self.g[k]

    def gains(self, lti: LtiSystem, cost: CostSpec) -> np.ndarray:
        """Optimal feedback gains K_t = -R^{-1} B^T P_t, shape (K+1, m, d)"""
        BtP = np.einsum("ji,kjl->kil", lti.B, self.P)
        return -np.stack([cost.solve_R(M) for M in BtP])


def _check_square(name: str, M: np.ndarray, d: int) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape != (d, d):
        raise ShapeError(name, expected=(d, d), actual=M.shape)
    return M


def _effective_input_weight(obj: Objective, lti: LtiSystem, cost: CostSpec) -> np.ndarray:
    """B R^{-1} B^T - theta Sigma (theta = 0 for SOC)"""
    return lti.B @ cost.solve_R(lti.B.T) - obj.theta * lti.Sigma


def dre_rhs(obj: Objective, lti: LtiSystem, cost: CostSpec, P: np.ndarray) -> np.ndarray:
    """
    D(P) = A^T P + P A + C^T C - P (B R^{-1} B^T - theta Sigma) P

    The SOC case is theta = 0.
    """
    check_lq_shapes(lti, cost)
    return _dre_closure(obj, lti, cost)(_check_square("P", P, lti.d))


def dual_dre_rhs(obj: Objective, lti: LtiSystem, cost: CostSpec, S: np.ndarray) -> np.ndarray:
    """
    D_dual(S) = A S + S A^T - (B R^{-1} B^T - theta Sigma) / kappa + kappa S C^T C S
    """
    check_lq_shapes(lti, cost)
    return _dual_dre_closure(obj, lti, cost)(_check_square("S", S, lti.d))


def s_from_p(obj: Objective, P: np.ndarray) -> np.ndarray:
    """S = P^{-1} (SOC) or (|theta| P)^{-1} (RSC)"""
    return inverse_pd(obj.kappa * np.asarray(P, dtype=float), name="P")


def _dre_closure(obj: Objective, lti: LtiSystem, cost: CostSpec) -> Callable[[np.ndarray], np.ndarray]:
    check_lq_shapes(lti, cost)
    A = lti.A
    M = _effective_input_weight(obj, lti, cost)
    CtC = cost.C.T @ cost.C
    return lambda P: symmetrize(A.T @ P + P @ A + CtC - P @ M @ P)


def _dual_dre_closure(obj: Objective, lti: LtiSystem, cost: CostSpec) -> Callable[[np.ndarray], np.ndarray]:
    check_lq_shapes(lti, cost)
    A = lti.A
    kappa = obj.kappa
    M = _effective_input_weight(obj, lti, cost)
    CtC = cost.C.T @ cost.C
    return lambda S: symmetrize(A @ S + S @ A.T - M / kappa + kappa * S @ CtC @ S)


def _rk4_step(f: Callable[[np.ndarray], np.ndarray], X: np.ndarray, h: float) -> np.ndarray:
    k1 = f(X)
    k2 = f(X + 0.5 * h * k1)
    k3 = f(X + 0.5 * h * k2)
    k4 = f(X + h * k3)
    return X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def make_grid(T: float, dt: float) -> np.ndarray:
    """Uniform grid on [0, T]; T must be an integer multiple of dt"""
    if not np.isfinite(dt) or dt <= 0:
        raise DomainError("dt", dt, message=f"dt must be positive, got {dt}")
    if not np.isfinite(T) or T <= 0:
        raise DomainError("T", T, message=f"T must be positive, got {T}")
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise DomainError("dt", dt, message=f"T={T} is not an integer multiple of dt={dt}")
    return np.linspace(0.0, T, n_steps + 1)


def integrate_dual_dre(obj: Objective, lti: LtiSystem, cost: CostSpec, T: float, dt: float) -> np.ndarray:
    """
    Integrate S backward from S_T = s_from_p(G) without reference to P.

    Returns:
        Array of shape (K+1, d, d) on the increasing grid make_grid(T, dt)
    """
    grid = make_grid(T, dt)
    h = grid[1] - grid[0]
    n_steps = len(grid) - 1

    dual_rhs = _dual_dre_closure(obj, lti, cost)

    def rhs(S: np.ndarray) -> np.ndarray:
        return -dual_rhs(S)

    S = np.empty((n_steps + 1, lti.d, lti.d))
    S[-1] = s_from_p(obj, cost.G)
    current = S[-1]
    for k in range(n_steps - 1, -1, -1):
        current = symmetrize(_rk4_step(rhs, current, h))
        if not np.all(np.isfinite(current)) or not is_positive_definite(current):
            raise IntegrationBlowupError(float(grid[k]), details={"equation": "dual"})
        S[k] = current
    return S


def integrate_dre(
    obj: Objective,
    lti: LtiSystem,
    cost: CostSpec,
    T: float,
    dt: float,
    dual: DualMode = DualMode.INVERSE,
) -> RiccatiSolution:
    """
    Backward RK4 integration of P and g from P_T = G, g_T = 0.

    Args:
        dual: INVERSE fills S by s_from_p at each grid time; INTEGRATED runs
            integrate_dual_dre independently (used by the consistency oracle)

    Raises:
        AssumptionViolationError: the LQ standing assumptions fail
        IntegrationBlowupError: P loses positive definiteness
    """
    ensure_lq_assumptions(lti, cost, obj)
    grid = make_grid(T, dt)
    h = grid[1] - grid[0]
    n_steps = len(grid) - 1
    d = lti.d
    Sigma = lti.Sigma

    p_rhs = _dre_closure(obj, lti, cost)

    P = np.empty((n_steps + 1, d, d))
    g = np.empty(n_steps + 1)
    P[-1] = symmetrize(cost.G)
    g[-1] = 0.0

    current_P, current_g = P[-1].copy(), 0.0
    for k in range(n_steps - 1, -1, -1):
        stages = [current_P]
        k1 = p_rhs(stages[0])
        stages.append(current_P + 0.5 * h * k1)
        k2 = p_rhs(stages[1])
        stages.append(current_P + 0.5 * h * k2)
        k3 = p_rhs(stages[2])
        stages.append(current_P + h * k3)
        k4 = p_rhs(stages[3])
        traces = [float(np.trace(Sigma @ X)) for X in stages]
        current_P = symmetrize(current_P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        current_g = current_g + (h / 6.0) * (traces[0] + 2.0 * traces[1] + 2.0 * traces[2] + traces[3])
        if not np.all(np.isfinite(current_P)) or not is_positive_definite(current_P):
            raise IntegrationBlowupError(float(grid[k]), details={"equation": "dre"})
        P[k] = current_P
        g[k] = current_g

    if DualMode(dual) == DualMode.INTEGRATED:
        S = integrate_dual_dre(obj, lti, cost, T, dt)
    else:
        S = np.stack([s_from_p(obj, Pk) for Pk in P])

    logger.info(
        "dre_integrated",
        variant=str(obj.variant),
        steps=n_steps,
        horizon=T,
        dual=str(DualMode(dual)),
        trace_P0=float(np.trace(P[0])),
    )
    return RiccatiSolution(time_grid=grid, P=P, g=g, S=S, objective=obj)


def are_residual(obj: Objective, lti: LtiSystem, cost: CostSpec, P: np.ndarray) -> float:
    """Frobenius norm of D(P)"""
    return float(np.linalg.norm(dre_rhs(obj, lti, cost, P), "fro"))


def solve_are(
    obj: Objective,
    lti: LtiSystem,
    cost: CostSpec,
    tol: float = 1e-10,
    t_max: float = 500.0,
    dt: float = 0.01,
) -> np.ndarray:
    """
    Stationary P by relaxing the DRE backward from P = I until |D(P)|_F < tol.

    Raises:
        NonConvergenceError: residual still above tol after t_max
        IntegrationBlowupError: P loses positive definiteness on the way
    """
    ensure_lq_assumptions(lti, cost, obj)
    if tol <= 0:
        raise DomainError("tol", tol, message="tol must be positive")

    rhs = _dre_closure(obj, lti, cost)

    P = np.eye(lti.d)
    n_max = int(np.ceil(t_max / dt))
    residual = are_residual(obj, lti, cost, P)
    for step in range(n_max):
        if residual < tol:
            logger.info("are_converged", variant=str(obj.variant), relaxation_time=step * dt, residual=residual)
            return P
        P = symmetrize(_rk4_step(rhs, P, dt))
        if not np.all(np.isfinite(P)) or not is_positive_definite(P):
            raise IntegrationBlowupError(-(step + 1) * dt, details={"equation": "are"})
        residual = float(np.linalg.norm(rhs(P), "fro"))

    if residual < tol:
        return P
    raise NonConvergenceError(residual, t_max)
