"""
Dual EnKF for the LQ Setting

Finite-N backward-time particle system whose ensemble covariance tracks the
dual DRE solution S_t:

    dY = (A Y + I(Y) + C(Y)) dt + B d_eta + sigma dW     (backward in time)

with the interaction field I, the correction field C and the exploration noise
covariance depending on the objective:

    objective     Cov(eta)          I                              C
    SOC           R^-1              1/2 S C^T C (z + n)            1/2 Sigma S^-1 (z - n)
    RSC theta>0   (|theta| R)^-1    |theta|/2 S C^T C (z + n)      Sigma S^-1 (z - n)
    RSC theta<0   (|theta| R)^-1    |theta|/2 S C^T C (z + n)      0

For theta < 0 the drift uses only the model and C, so the run needs no
knowledge of sigma beyond simulating it.
"""

from typing import Optional

import numpy as np
import scipy.linalg
import structlog

from app.core.linalg import jittered_cho_factor, symmetrize
from app.filters.base_filter import BackwardEnsembleFilter, sample_terminal
from app.filters.ensemble import Ensemble, EnkfOptions, EnsembleStats, EnsembleTrajectory, NoiseSpec
from app.models.enums import EtaConvention, Prop2Mode
from app.models.system import CostSpec, LtiSystem, Objective, check_lq_shapes, ensure_lq_assumptions

logger = structlog.get_logger(__name__)

PROP2_RESIDUAL_TOL = 1e-10

__all__ = [
    "DualEnkf",
    "correction_coefficient",
    "field_C_lq",
    "field_I_lq",
    "noise_covariance",
    "prop2_noise_override",
    "run_dual_enkf",
    "sample_terminal",
    "step_backward",
]


def noise_covariance(
    obj: Objective,
    cost: CostSpec,
    convention: EtaConvention = EtaConvention.CONSISTENT,
) -> NoiseSpec:
    """
    Cov(eta) per objective: R^-1 for SOC and (kappa R)^-1 for RSC.

    EtaConvention.TABULATED uses (sqrt(|theta|) R)^-1 for RSC instead; the two
    agree at |theta| = 1.
    """
    R_inv = cost.R_inv
    if not obj.is_rsc:
        return NoiseSpec(eta_cov=R_inv)
    if EtaConvention(convention) == EtaConvention.TABULATED:
        scale = np.sqrt(abs(obj.theta))
    else:
        scale = obj.kappa
    return NoiseSpec(eta_cov=R_inv / scale, correction_active=obj.theta > 0)


def prop2_noise_override(obj: Objective, lti: LtiSystem, cost: CostSpec) -> Optional[NoiseSpec]:
    """
    Reduced-noise configuration with the correction field switched off.

    SOC:        B R^-1 B^T - Sigma             = B R~ B^T
    RSC th>0:   (B R^-1 B^T - 2 theta Sigma)/theta = B R~ B^T

    R~ is the least-squares solution on the column space of B. Returns None
    when the objective has no such form (theta < 0), the residual exceeds
    1e-10 or R~ is not positive semi-definite.
    """
    check_lq_shapes(lti, cost)
    B, Sigma = lti.B, lti.Sigma
    D = B @ cost.solve_R(B.T)
    if not obj.is_rsc:
        target = D - Sigma
    elif obj.theta > 0:
        target = (D - 2.0 * obj.theta * Sigma) / obj.theta
    else:
        return None

    B_pinv = scipy.linalg.pinv(B)
    R_tilde = symmetrize(B_pinv @ target @ B_pinv.T)
    residual = float(np.linalg.norm(B @ R_tilde @ B.T - target, "fro"))
    if residual > PROP2_RESIDUAL_TOL * max(1.0, float(np.linalg.norm(target, "fro"))):
        logger.info("prop2_not_applicable", reason="residual", residual=residual)
        return None

    scale = max(1.0, float(np.max(np.abs(R_tilde))))
    if np.min(np.linalg.eigvalsh(R_tilde)) < -1e-12 * scale:
        logger.info("prop2_not_applicable", reason="indefinite", min_eigenvalue=float(np.min(np.linalg.eigvalsh(R_tilde))))
        return None
    R_tilde[np.abs(R_tilde) < 1e-14 * scale] = 0.0

    return NoiseSpec(
        eta_cov=R_tilde,
        use_process_noise=bool(np.any(Sigma != 0.0)),
        correction_active=False,
        source="reduced",
    )


def field_I_lq(z: np.ndarray, stats: EnsembleStats, obj: Objective, cost: CostSpec) -> np.ndarray:
    """kappa/2 S C^T C (z + n), vectorized over leading axes of z"""
    z = np.asarray(z, dtype=float)
    gain = 0.5 * obj.kappa * stats.S @ cost.C.T @ cost.C
    return (z + stats.n) @ gain.T


def correction_coefficient(obj: Objective) -> float:
    """1/2 (SOC), 1 (RSC theta > 0), 0 (RSC theta < 0)"""
    if not obj.is_rsc:
        return 0.5
    return 1.0 if obj.theta > 0 else 0.0


def correction_field(z: np.ndarray, stats: EnsembleStats, obj: Objective, Sigma: np.ndarray) -> np.ndarray:
    """coef * Sigma S^-1 (z - n) with S inverted under the jitter policy"""
    z = np.asarray(z, dtype=float)
    coef = correction_coefficient(obj)
    if coef == 0.0 or not np.any(Sigma != 0.0):
        return np.zeros_like(z)
    factor, _ = jittered_cho_factor(stats.S)
    # S^-1 Sigma; its transpose is Sigma S^-1
    gain = coef * scipy.linalg.cho_solve(factor, Sigma).T
    return (z - stats.n) @ gain.T


def field_C_lq(z: np.ndarray, stats: EnsembleStats, obj: Objective, lti: LtiSystem) -> np.ndarray:
    """
    Correction field with Sigma = sigma sigma^T of the LTI model.

    Raises:
        SingularCovarianceError: S stays singular after jitter escalation
    """
    return correction_field(z, stats, obj, lti.Sigma)


class DualEnkf(BackwardEnsembleFilter):
    """Dual EnKF with constant A, B, sigma"""

    def __init__(
        self,
        lti: LtiSystem,
        cost: CostSpec,
        obj: Objective,
        noise: NoiseSpec,
        options: EnkfOptions = None,
    ):
        super().__init__(cost, obj, noise, options)
        self.lti = lti
        self._Sigma = lti.Sigma

    @property
    def d(self) -> int:
        return self.lti.d

    @property
    def d_w(self) -> int:
        return self.lti.d_w

    def drift(self, Y: np.ndarray, stats: EnsembleStats) -> np.ndarray:
        total = Y @ self.lti.A.T + field_I_lq(Y, stats, self.obj, self.cost)
        if self.noise.correction_active:
            total = total + correction_field(Y, stats, self.obj, self._Sigma)
        return total

    def input_map(self, Y: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.lti.B, (Y.shape[0],) + self.lti.B.shape)

    def diffusion(self, Y: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.lti.sigma, (Y.shape[0],) + self.lti.sigma.shape)

    def metadata(self):
        meta = super().metadata()
        meta["model_free"] = self.obj.is_rsc and self.obj.theta < 0
        return meta


def select_noise(obj: Objective, lti: LtiSystem, cost: CostSpec, options: EnkfOptions) -> NoiseSpec:
    """Table noise, or the reduced-noise configuration when requested and applicable"""
    if Prop2Mode(options.prop2) == Prop2Mode.AUTO:
        override = prop2_noise_override(obj, lti, cost)
        if override is not None:
            logger.info("prop2_override_applied", variant=str(obj.variant), eta_cov=override.eta_cov.tolist())
            return override
    return noise_covariance(obj, cost, options.eta_convention)


def step_backward(
    ens: Ensemble,
    dt: float,
    lti: LtiSystem,
    cost: CostSpec,
    obj: Objective,
    noise: NoiseSpec,
    seed: int,
    step_index: int,
) -> Ensemble:
    """
    One reversed-time Euler-Maruyama step of the LQ particle system.

    The noise rows for this step come from the (seed, step_index) substreams.
    """
    return DualEnkf(lti, cost, obj, noise).step(ens, dt, step_index, seed)


def run_dual_enkf(
    lti: LtiSystem,
    cost: CostSpec,
    obj: Objective,
    T: float,
    dt: float,
    N: int,
    seed: int,
    options: EnkfOptions = None,
) -> EnsembleTrajectory:
    """
    Terminal sampling then backward stepping from T to 0.

    Raises:
        AssumptionViolationError: LQ assumptions fail
        InsufficientParticlesError: N < d + 1
        DivergenceError: a particle became non-finite
    """
    options = options or EnkfOptions()
    ensure_lq_assumptions(lti, cost, obj)
    noise = select_noise(obj, lti, cost, options)
    return DualEnkf(lti, cost, obj, noise, options).run(T, dt, N, seed)

