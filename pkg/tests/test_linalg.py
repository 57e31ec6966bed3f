import numpy as np
import pytest

from app.core.exceptions import SingularCovarianceError, SingularityError
from app.core.linalg import (
    inverse_pd,
    is_positive_definite,
    jittered_cho_factor,
    psd_sqrt,
    regularized_inverse,
    regularized_solve,
    symmetrize,
)


def test_symmetrize():
    M = np.array([[1.0, 2.0], [0.0, 1.0]])
    assert np.array_equal(symmetrize(M), np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_is_positive_definite():
    assert is_positive_definite(np.eye(3))
    assert not is_positive_definite(np.diag([1.0, 0.0]))
    assert not is_positive_definite(-np.eye(2))


def test_inverse_pd():
    M = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert np.allclose(inverse_pd(M) @ M, np.eye(2))


def test_inverse_pd_singular():
    with pytest.raises(SingularityError):
        inverse_pd(np.zeros((2, 2)), name="P")


def test_jitter_not_applied_to_well_conditioned():
    _, jitter = jittered_cho_factor(np.eye(2))
    assert jitter == 0.0


def test_jitter_escalates_on_rank_deficient_covariance():
    S = np.diag([1.0, 0.0])
    _, jitter = jittered_cho_factor(S)
    assert 0.0 < jitter <= 1e-4 * 0.5


def test_jitter_gives_up_on_zero_covariance():
    with pytest.raises(SingularCovarianceError):
        jittered_cho_factor(np.zeros((2, 2)))


def test_regularized_solve_matches_exact_on_pd():
    S = np.array([[2.0, 0.3], [0.3, 0.5]])
    rhs = np.array([1.0, -1.0])
    assert np.allclose(regularized_solve(S, rhs), np.linalg.solve(S, rhs))
    assert np.allclose(regularized_inverse(S), np.linalg.inv(S))


def test_psd_sqrt_factorizes(rng):
    X = rng.standard_normal((4, 2))
    M = X @ X.T
    L = psd_sqrt(M)
    assert np.allclose(L @ L.T, M)


def test_psd_sqrt_of_zero():
    assert np.array_equal(psd_sqrt(np.zeros((2, 2))), np.zeros((2, 2)))
