import pytest

from app.core.exceptions import (
    AssumptionViolationError,
    ConfigurationError,
    CostOverflowError,
    DivergenceError,
    DomainError,
    DualEnkfException,
    InsufficientParticlesError,
    IntegrationBlowupError,
    NonConvergenceError,
    OracleError,
    ResolutionError,
    ShapeError,
    SingularCovarianceError,
    SingularityError,
)


@pytest.mark.parametrize(
    "exc, code",
    [
        (ShapeError("A", expected=(2, 2), actual=(2, 3)), "SHAPE_ERROR"),
        (DomainError("theta", 0.0), "DOMAIN_ERROR"),
        (AssumptionViolationError(["controllability"]), "ASSUMPTION_VIOLATION"),
        (InsufficientParticlesError(1, 3), "INSUFFICIENT_PARTICLES"),
        (ConfigurationError("solver.N"), "CONFIGURATION_ERROR"),
        (ResolutionError(0.5, 0.1), "RESOLUTION_ERROR"),
    ],
)
def test_validation_errors_exit_with_2(exc, code):
    assert exc.error_code == code
    assert exc.exit_code == 2
    assert isinstance(exc, DualEnkfException)


@pytest.mark.parametrize(
    "exc, code",
    [
        (SingularityError("P"), "SINGULARITY_ERROR"),
        (SingularCovarianceError(1e18, 1e-4), "SINGULAR_COVARIANCE"),
        (IntegrationBlowupError(1.5), "INTEGRATION_BLOWUP"),
        (NonConvergenceError(1e-3, 500.0), "NON_CONVERGENCE"),
        (DivergenceError(10, 0.9), "DIVERGENCE"),
        (OracleError("x=[0.0]"), "ORACLE_ERROR"),
        (CostOverflowError(2.0, 1e308), "COST_OVERFLOW"),
    ],
)
def test_numerical_errors_exit_with_3(exc, code):
    assert exc.error_code == code
    assert exc.exit_code == 3


def test_to_dict_carries_details():
    exc = InsufficientParticlesError(2, 3)
    payload = exc.to_dict()
    assert payload["error"] == "INSUFFICIENT_PARTICLES"
    assert payload["details"] == {"n_particles": 2, "required": 3}
    assert "too small" in payload["message"]


def test_assumption_violation_lists_failures():
    exc = AssumptionViolationError(["controllability", "positivity"])
    assert exc.failed == ["controllability", "positivity"]
    assert "controllability, positivity" in str(exc)
