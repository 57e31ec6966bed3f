"""
Gaussian-Approximation Dual EnKF

For nonlinear dynamics the exact interaction field solves a Poisson equation.
Under a Gaussian approximation of the ensemble density it is replaced by the
empirical constant-gain field

    I~(Y^i) = k * sum_j (Y^j - n)(c(Y^j) - c_hat)^T (c(Y^i) + c_hat)

with k = kappa / (2(N-1)) (EtaConvention.CONSISTENT) or 1 / (2|theta|(N-1))
(TABULATED, RSC only). The cross-moment is a d x q matrix formed once per step.
The correction field keeps its LQ form with the constant Sigma.

The run happens in error coordinates e = x - target so that the terminal
density N(0, S_T) is centred on the equilibrium.
"""

from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
import structlog

from app.core.config import settings
from app.core.exceptions import DomainError
from app.core.rng import Stream, substream
from app.filters.base_filter import BackwardEnsembleFilter
from app.filters.dual_enkf import correction_field, noise_covariance
from app.filters.ensemble import Ensemble, EnkfOptions, EnsembleStats, EnsembleTrajectory, NoiseSpec
from app.models.enums import EtaConvention
from app.models.system import CostSpec, Objective, SystemModel

logger = structlog.get_logger(__name__)

CONSTANCY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class GaContext:
    """c(Y^i) for every particle and their mean c_hat"""

    c_values: np.ndarray
    c_hat: np.ndarray

    @classmethod
    def from_particles(cls, Y: np.ndarray, cost: CostSpec) -> "GaContext":
        c_values = np.atleast_2d(cost.c(Y))
        if c_values.shape[0] != Y.shape[0]:
            c_values = c_values.reshape(Y.shape[0], -1)
        return cls(c_values=c_values, c_hat=c_values.mean(axis=0))


def ga_prefactor(obj: Objective, N: int, convention: EtaConvention = EtaConvention.CONSISTENT) -> float:
    if obj.is_rsc and EtaConvention(convention) == EtaConvention.TABULATED:
        return 1.0 / (2.0 * abs(obj.theta) * (N - 1))
    return obj.kappa / (2.0 * (N - 1))


def interaction_ga(
    ens: Ensemble,
    ctx: GaContext,
    obj: Objective,
    convention: EtaConvention = EtaConvention.CONSISTENT,
) -> np.ndarray:
    """Empirical interaction field for every particle, shape (N, d)"""
    Y = ens.particles
    N = ens.N
    Yc = Y - Y.mean(axis=0)
    cross = Yc.T @ (ctx.c_values - ctx.c_hat)
    return ga_prefactor(obj, N, convention) * (ctx.c_values + ctx.c_hat) @ cross.T


@dataclass
class PremiseReport:
    """Measured deviation of a model from divergence-free drift and constant b, sigma"""

    max_divergence: float
    input_map_variation: float
    diffusion_variation: float
    probes: int

    @property
    def divergence_free(self) -> bool:
        return self.max_divergence <= 1e-6

    @property
    def constant_input_map(self) -> bool:
        return self.input_map_variation <= CONSTANCY_TOL

    def to_dict(self) -> Dict[str, Any]:
        return {
            "max_divergence": self.max_divergence,
            "input_map_variation": self.input_map_variation,
            "diffusion_variation": self.diffusion_variation,
            "probes": self.probes,
            "divergence_free": self.divergence_free,
            "constant_input_map": self.constant_input_map,
        }


def check_simplification_premises(
    model: SystemModel,
    seed: int = 0,
    n_probes: int = None,
    spread: float = 1.0,
) -> PremiseReport:
    """
    Probe div a, b and sigma at random states around the target.

    A non-zero divergence or state-dependent b is logged and tolerated; a
    state-dependent sigma is rejected since the correction field assumes it
    constant.

    Raises:
        DomainError: sigma varies with the state
    """
    n_probes = n_probes or settings.DIVERGENCE_PROBES
    rng = substream(seed, Stream.PROBE)
    states = model.target + spread * rng.standard_normal((n_probes, model.d))

    divergence = max(abs(model.divergence(x)) for x in states)
    b_ref = model.b(model.target)
    sigma_ref = model.sigma(model.target)
    b_var = float(np.max(np.abs(model.b(states) - b_ref)))
    sigma_var = float(np.max(np.abs(model.sigma(states) - sigma_ref)))

    report = PremiseReport(
        max_divergence=float(divergence),
        input_map_variation=b_var,
        diffusion_variation=sigma_var,
        probes=n_probes,
    )
    if sigma_var > CONSTANCY_TOL:
        raise DomainError(
            "sigma",
            message="Gaussian-approximation filter requires a state-independent diffusion",
            details=report.to_dict(),
        )
    if not report.divergence_free:
        logger.warning("drift_not_divergence_free", model=model.name, max_divergence=report.max_divergence)
    if not report.constant_input_map:
        logger.warning("input_map_state_dependent", model=model.name, variation=b_var)
    return report


class GaussApproxEnkf(BackwardEnsembleFilter):
    """Dual EnKF with the empirical interaction field, for a model in error coordinates"""

    def __init__(
        self,
        model: SystemModel,
        cost: CostSpec,
        obj: Objective,
        noise: NoiseSpec,
        options: EnkfOptions = None,
        target: np.ndarray = None,
    ):
        super().__init__(cost, obj, noise, options)
        self.model = model
        self.target = np.zeros(model.d) if target is None else np.asarray(target, dtype=float)
        sigma = np.asarray(model.sigma(np.zeros(model.d)))
        self._Sigma = sigma @ sigma.T

    @property
    def d(self) -> int:
        return self.model.d

    @property
    def d_w(self) -> int:
        return self.model.d_w

    def drift(self, Y: np.ndarray, stats: EnsembleStats) -> np.ndarray:
        ens = Ensemble(particles=Y)
        ctx = GaContext.from_particles(Y, self.cost)
        total = self.model.a(Y) + interaction_ga(ens, ctx, self.obj, self.options.eta_convention)
        if self.noise.correction_active:
            total = total + correction_field(Y, stats, self.obj, self._Sigma)
        return total

    def input_map(self, Y: np.ndarray) -> np.ndarray:
        return self.model.b(Y)

    def diffusion(self, Y: np.ndarray) -> np.ndarray:
        return self.model.sigma(Y)

    def metadata(self):
        meta = super().metadata()
        meta["coordinates"] = "error"
        meta["target"] = self.target.tolist()
        return meta


def run_ga_enkf(
    model: SystemModel,
    cost: CostSpec,
    obj: Objective,
    T: float,
    dt: float,
    N: int,
    seed: int,
    options: EnkfOptions = None,
) -> EnsembleTrajectory:
    """
    Gaussian-approximation dual EnKF.

    The recorded statistics are in error coordinates e = x - target.

    Raises:
        DomainError: state-dependent sigma or non-quadratic terminal cost
        InsufficientParticlesError: N < d + 1
        DivergenceError: a particle became non-finite
    """
    options = options or EnkfOptions()
    check_simplification_premises(model, seed=seed)
    if cost.C is None and cost.output is None:
        raise DomainError("c", message="Cost output map is required")

    shifted_model = model.shifted()
    shifted_cost = cost.shifted()
    noise = noise_covariance(obj, shifted_cost, options.eta_convention)
    runner = GaussApproxEnkf(shifted_model, shifted_cost, obj, noise, options, target=model.target)
    return runner.run(T, dt, N, seed)
