"""
Shared matrix helpers: symmetrization, Cholesky-based inversion with jitter
escalation, and PSD square roots.
"""

from typing import Tuple

import numpy as np
import scipy.linalg
import structlog

from app.core.config import settings
from app.core.exceptions import SingularCovarianceError, SingularityError

logger = structlog.get_logger(__name__)


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Return (M + M^T) / 2"""
    return 0.5 * (M + M.T)


def is_positive_definite(M: np.ndarray) -> bool:
    """Cholesky test for positive definiteness"""
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


def inverse_pd(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Invert a symmetric positive definite matrix via Cholesky, no regularization"""
    try:
        factor = scipy.linalg.cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(name, details={"reason": str(exc)}) from exc
    return symmetrize(scipy.linalg.cho_solve(factor, np.eye(M.shape[0])))


def jittered_cho_factor(S: np.ndarray) -> Tuple[Tuple[np.ndarray, bool], float]:
    """
    Cholesky factor of an ensemble covariance, adding eps*I on failure.

    eps starts at JITTER_START * trace(S)/d and grows by JITTER_GROWTH up to
    JITTER_MAX * trace(S)/d.

    Returns:
        (cho_factor result, jitter actually added)

    Raises:
        SingularCovarianceError: if the factorization fails at the largest jitter
    """
    d = S.shape[0]
    try:
        return scipy.linalg.cho_factor(S), 0.0
    except np.linalg.LinAlgError:
        pass

    scale = float(np.trace(S)) / d
    if not np.isfinite(scale) or scale <= 0.0:
        raise SingularCovarianceError(condition_number=float("inf"), jitter=0.0)

    eps = settings.JITTER_START * scale
    eps_max = settings.JITTER_MAX * scale
    identity = np.eye(d)
    while eps <= eps_max * (1.0 + 1e-12):
        try:
            factor = scipy.linalg.cho_factor(S + eps * identity)
        except np.linalg.LinAlgError:
            eps *= settings.JITTER_GROWTH
            continue
        logger.warning("covariance_jitter_applied", jitter=eps, trace=float(np.trace(S)))
        return factor, eps

    raise SingularCovarianceError(condition_number=float(np.linalg.cond(S)), jitter=eps_max)


def regularized_solve(S: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve S X = rhs with the jittered Cholesky factor of S"""
    factor, _ = jittered_cho_factor(S)
    return scipy.linalg.cho_solve(factor, rhs)


def regularized_inverse(S: np.ndarray) -> np.ndarray:
    """Inverse of an ensemble covariance under the jitter policy"""
    return symmetrize(regularized_solve(S, np.eye(S.shape[0])))


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    """Factor L with L L^T = M for a symmetric PSD matrix (eigen-decomposition)"""
    w, V = scipy.linalg.eigh(symmetrize(M))
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w)
