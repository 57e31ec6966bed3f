"""
Numerical Oracles

Checks that tie the solvers back to the underlying identities:

- poisson_residual_1d: finite-difference residuals of the two Poisson
  equations satisfied by the LQ interaction and correction fields under the
  Gaussian density N(0, S), on a uniform 1-D grid
- dual_consistency: max_t |kappa S_t P_t - I|_F of a Riccati solution
- convergence_curve: Frobenius error of S^(N)_0 against the DRE over a seed sweep
- gaussianity: per-coordinate skewness of an ensemble
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, Field, field_validator
from scipy.integrate import trapezoid
from scipy.stats import norm, skew

from app.core.config import settings
from app.core.exceptions import DomainError, ResolutionError, ShapeError
from app.filters.dual_enkf import correction_coefficient, run_dual_enkf
from app.filters.ensemble import Ensemble, EnkfOptions
from app.models.enums import SnapshotMode
from app.models.system import CostSpec, LtiSystem, Objective
from app.solvers.riccati import RiccatiSolution, integrate_dre

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, eq=False)
class GridDensity1D:
    """Gaussian density N(mean, S) sampled on a uniform grid over [-L, L]"""

    x: np.ndarray
    spacing: float
    half_width: float
    S: float
    mean: float
    density: np.ndarray

    def mass(self) -> float:
        return float(trapezoid(self.density, self.x))

    def expectation(self, values: np.ndarray) -> float:
        return float(trapezoid(values * self.density, self.x))


def build_grid_density(S: float, L: float = 8.0, h: float = 1e-3, mean: float = 0.0) -> GridDensity1D:
    """
    Raises:
        DomainError: S <= 0 or L <= 0
        ResolutionError: h > sqrt(S)/10
    """
    if not np.isfinite(S) or S <= 0:
        raise DomainError("S", S, message="Density variance must be positive")
    if L <= 0 or h <= 0:
        raise DomainError("grid", (L, h), message="Grid half-width and spacing must be positive")
    limit = np.sqrt(S) / 10.0
    if h > limit:
        raise ResolutionError(h, limit)
    n_points = int(round(2.0 * L / h)) + 1
    x = np.linspace(-L, L, n_points)
    density = norm.pdf(x, loc=mean, scale=np.sqrt(S))
    if L < 8.0 * np.sqrt(S):
        logger.warning("grid_truncates_density", half_width=L, std=float(np.sqrt(S)))
    return GridDensity1D(x=x, spacing=float(x[1] - x[0]), half_width=L, S=S, mean=mean, density=density)


def _scalar_instance(lti: LtiSystem, cost: CostSpec) -> Tuple[float, float, float, float, float]:
    if lti.d != 1 or lti.m != 1 or cost.C is None or cost.C.shape != (1, 1):
        raise ShapeError("lti", expected="scalar LQ instance", actual=(lti.d, lti.m))
    A = float(lti.A[0, 0])
    D = float((lti.B @ cost.solve_R(lti.B.T))[0, 0])
    Sigma = float(lti.Sigma[0, 0])
    c = float(cost.C[0, 0])
    return A, D, Sigma, c, float(lti.B[0, 0])


def observation_function(obj: Objective, lti: LtiSystem, cost: CostSpec, S: float, x: np.ndarray) -> np.ndarray:
    """
    h_t on the grid for the Gaussian density with variance S:

        SOC          1/2 c^2 x^2 + A - (D - Sigma) / (2S)
        RSC th<0    -theta/2 c^2 x^2 + A + D / (2 theta S)
        RSC th>0     theta/2 c^2 x^2 + A - (D/theta - 2 Sigma) / (2S)

    with D = B R^-1 B^T. Only h - E[h] enters the residual.
    """
    A, D, Sigma, c, _ = _scalar_instance(lti, cost)
    theta = obj.theta
    if not obj.is_rsc:
        return 0.5 * c**2 * x**2 + A - 0.5 * (D - Sigma) / S
    if theta < 0:
        return -0.5 * theta * c**2 * x**2 + A + D / (2.0 * theta * S)
    return 0.5 * theta * c**2 * x**2 + A - 0.5 * (D / theta - 2.0 * Sigma) / S


def poisson_residual_1d(
    obj: Objective,
    lti: LtiSystem,
    cost: CostSpec,
    S: float,
    grid: GridDensity1D,
    field_scale: float = 1.0,
) -> Tuple[float, float]:
    """
    Sup-norm residuals of

        -(p I)' = p (h - E_p[h])        -(p C)' = V

    for the LQ fields I(x) = kappa/2 S c^2 x, C(x) = k Sigma x / S and
    V = k Sigma p'' (k = 1/2, 1, 0 for SOC, RSC th>0, RSC th<0), using
    second-order central differences.

    Args:
        field_scale: multiplier on I, to confirm the oracle detects a wrong field
    """
    if not np.isclose(grid.S, S) or grid.mean != 0.0:
        raise DomainError("grid", message="Grid density must be N(0, S) for the requested S")
    _, _, Sigma, c, _ = _scalar_instance(lti, cost)
    x, p, h = grid.x, grid.density, grid.spacing

    interaction = field_scale * 0.5 * obj.kappa * S * c**2 * x
    obs = observation_function(obj, lti, cost, S, x)
    rhs_I = p * (obs - grid.expectation(obs))
    lhs_I = -np.gradient(p * interaction, h, edge_order=2)
    residual_I = float(np.max(np.abs(lhs_I - rhs_I)))

    k = correction_coefficient(obj)
    correction = k * Sigma * x / S
    p_second = p * (x**2 / S**2 - 1.0 / S)
    rhs_C = k * Sigma * p_second
    lhs_C = -np.gradient(p * correction, h, edge_order=2)
    residual_C = float(np.max(np.abs(lhs_C - rhs_C)))

    logger.debug("poisson_residuals", variant=str(obj.variant), residual_I=residual_I, residual_C=residual_C)
    return residual_I, residual_C


def dual_consistency(sol: RiccatiSolution) -> float:
    """max over the grid of |kappa S_t P_t - I|_F"""
    kappa = sol.objective.kappa
    eye = np.eye(sol.d)
    products = kappa * np.einsum("kij,kjl->kil", sol.S, sol.P) - eye
    return float(np.max(np.linalg.norm(products, axis=(1, 2))))


class ConvergencePoint(BaseModel):
    """Error statistics over the seeds run at one particle count"""

    N: int
    mean_error: float
    std: float = Field(description="Sample standard deviation of the per-seed errors")
    std_error: float = Field(description="std / sqrt(seeds)")
    seeds: int


class ConvergenceCurve(BaseModel):
    points: List[ConvergencePoint] = Field(default_factory=list)

    @field_validator("points")
    @classmethod
    def validate_increasing(cls, v):
        if any(b.N <= a.N for a, b in zip(v, v[1:])):
            raise ValueError("N must be strictly increasing")
        return v

    def mean_errors(self) -> List[float]:
        return [p.mean_error for p in self.points]

    def is_decreasing(self) -> bool:
        errors = self.mean_errors()
        return all(b < a for a, b in zip(errors, errors[1:]))


def seed_sweep_errors(
    lti: LtiSystem,
    cost: CostSpec,
    obj: Objective,
    T: float,
    dt: float,
    N: int,
    seeds: Sequence[int],
    reference: np.ndarray,
    options: EnkfOptions = None,
    relative: bool = False,
) -> np.ndarray:
    """|S^(N)_0 - reference|_F (optionally relative) for each seed"""
    options = (options or EnkfOptions()).model_copy(update={"snapshots": SnapshotMode.NONE})
    scale = float(np.linalg.norm(reference, "fro")) if relative else 1.0

    def one(seed: int) -> float:
        traj = run_dual_enkf(lti, cost, obj, T, dt, N, seed, options)
        return float(np.linalg.norm(traj.S0 - reference, "fro")) / scale

    workers = min(settings.WORKERS, len(seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(one, seeds)))
    return np.array([one(seed) for seed in seeds])


def convergence_curve(
    instance: Tuple[LtiSystem, CostSpec, Objective],
    Ns: Sequence[int],
    seeds: int,
    T: float = 5.0,
    dt: float = 0.01,
    base_seed: int = 0,
    options: EnkfOptions = None,
) -> ConvergenceCurve:
    """
    Mean, standard deviation and standard error of |S^(N)_0 - S_0|_F over
    `seeds` runs per N.

    Raises:
        DomainError: Ns not strictly increasing or seeds < 1
    """
    Ns = list(Ns)
    if not Ns or any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise DomainError("Ns", Ns, message="Ns must be non-empty and strictly increasing")
    if seeds < 1:
        raise DomainError("seeds", seeds, message="At least one seed is required")

    lti, cost, obj = instance
    reference = integrate_dre(obj, lti, cost, T, dt).S[0]
    seed_list = [base_seed + i for i in range(seeds)]

    points = []
    for N in Ns:
        errors = seed_sweep_errors(lti, cost, obj, T, dt, N, seed_list, reference, options)
        std = float(errors.std(ddof=1)) if seeds > 1 else 0.0
        std_error = std / np.sqrt(seeds)
        points.append(ConvergencePoint(N=N, mean_error=float(errors.mean()), std=std, std_error=std_error, seeds=seeds))
        logger.info("convergence_point", N=N, mean_error=points[-1].mean_error, std=std, std_error=std_error)
    return ConvergenceCurve(points=points)


def gaussianity(ens: Ensemble) -> np.ndarray:
    """Per-coordinate sample skewness"""
    return np.atleast_1d(skew(ens.particles, axis=0, bias=False))
