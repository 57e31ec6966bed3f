"""
Custom Exception Classes

This module defines all custom exceptions used throughout the dual EnKF library
with stable error codes, structured details and the CLI exit code each one maps to.

Exit codes:
- 2: validation errors (bad shapes, parameters, configuration, violated assumptions)
- 3: numerical failures (blow-up, divergence, singular matrices, overflow)
"""

from typing import Optional, Dict, Any


class DualEnkfException(Exception):
    """Base exception for all dual EnKF errors"""

    exit_code: int = 3

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.error_code = error_code or self.__class__.__name__
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for reports and logs"""
        return {
            "error": self.error_code,
            "message": self.message,
            "details": self.details
        }


class ValidationFailure(DualEnkfException):
    """Common parent of errors raised before any computation starts"""

    exit_code = 2


class ShapeError(ValidationFailure):
    """Raised when array dimensions are inconsistent"""

    def __init__(self, name: str, expected: Any = None, actual: Any = None, details: Dict[str, Any] = None):
        self.name = name
        message = f"Shape mismatch for {name}"
        if expected is not None:
            message += f" (expected {expected}, got {actual})"
        super().__init__(
            message=message,
            error_code="SHAPE_ERROR",
            details={"name": name, "expected": str(expected), "actual": str(actual), **(details or {})}
        )


class DomainError(ValidationFailure):
    """Raised when a parameter lies outside its admissible domain"""

    def __init__(self, parameter: str, value: Any = None, message: str = None, details: Dict[str, Any] = None):
        self.parameter = parameter
        message = message or f"Invalid value for {parameter}: {value}"
        super().__init__(
            message=message,
            error_code="DOMAIN_ERROR",
            details={"parameter": parameter, "value": str(value), **(details or {})}
        )


class AssumptionViolationError(ValidationFailure):
    """Raised when the LQ standing assumptions do not hold"""

    def __init__(self, failed: list, message: str = None, details: Dict[str, Any] = None):
        self.failed = list(failed)
        message = message or f"LQ assumptions violated: {', '.join(self.failed)}"
        super().__init__(
            message=message,
            error_code="ASSUMPTION_VIOLATION",
            details={"failed": self.failed, **(details or {})}
        )


class InsufficientParticlesError(ValidationFailure):
    """Raised when the ensemble is too small for the requested statistic"""

    def __init__(self, n_particles: int, required: int, details: Dict[str, Any] = None):
        self.n_particles = n_particles
        self.required = required
        super().__init__(
            message=f"Ensemble of {n_particles} particles is too small (need at least {required})",
            error_code="INSUFFICIENT_PARTICLES",
            details={"n_particles": n_particles, "required": required, **(details or {})}
        )


class ConfigurationError(ValidationFailure):
    """Raised when configuration is invalid"""

    def __init__(self, config_key: str = None, message: str = None, details: Dict[str, Any] = None):
        self.config_key = config_key

        message = message or f"Configuration error{f' for {config_key}' if config_key else ''}"

        super().__init__(
            message=message,
            error_code="CONFIGURATION_ERROR",
            details={"config_key": config_key, **(details or {})} if config_key else (details or {})
        )


class ResolutionError(ValidationFailure):
    """Raised when a grid is too coarse for the density it must resolve"""

    def __init__(self, spacing: float, limit: float, details: Dict[str, Any] = None):
        super().__init__(
            message=f"Grid spacing {spacing:g} exceeds the resolution limit {limit:g}",
            error_code="RESOLUTION_ERROR",
            details={"spacing": spacing, "limit": limit, **(details or {})}
        )


class SingularityError(DualEnkfException):
    """Raised when a matrix that must be inverted is singular"""

    def __init__(self, name: str, message: str = None, details: Dict[str, Any] = None):
        self.name = name
        super().__init__(
            message=message or f"Matrix {name} is singular",
            error_code="SINGULARITY_ERROR",
            details={"name": name, **(details or {})}
        )


class SingularCovarianceError(DualEnkfException):
    """Raised when the ensemble covariance stays singular after jitter escalation"""

    def __init__(self, condition_number: float, jitter: float, details: Dict[str, Any] = None):
        self.condition_number = condition_number
        self.jitter = jitter
        super().__init__(
            message=(
                f"Ensemble covariance is singular (condition number {condition_number:.3e}) "
                f"even with jitter {jitter:.3e}"
            ),
            error_code="SINGULAR_COVARIANCE",
            details={"condition_number": condition_number, "jitter": jitter, **(details or {})}
        )


class IntegrationBlowupError(DualEnkfException):
    """Raised when a Riccati solution loses positive definiteness"""

    def __init__(self, time: float, details: Dict[str, Any] = None):
        self.time = time
        super().__init__(
            message=f"Riccati solution lost positive definiteness at t={time:.6g}",
            error_code="INTEGRATION_BLOWUP",
            details={"time": time, **(details or {})}
        )


class NonConvergenceError(DualEnkfException):
    """Raised when a stationary solution is not reached in the allotted horizon"""

    def __init__(self, residual: float, t_max: float, details: Dict[str, Any] = None):
        self.residual = residual
        self.t_max = t_max
        super().__init__(
            message=f"No convergence by t_max={t_max:g}; final residual {residual:.3e}",
            error_code="NON_CONVERGENCE",
            details={"residual": residual, "t_max": t_max, **(details or {})}
        )


class DivergenceError(DualEnkfException):
    """Raised when a simulated particle or state becomes non-finite"""

    def __init__(self, step: int, time: float, message: str = None, details: Dict[str, Any] = None):
        self.step = step
        self.time = time
        message = message or (
            f"Non-finite state at step {step} (t={time:.6g}); try a smaller dt"
        )
        super().__init__(
            message=message,
            error_code="DIVERGENCE",
            details={"step": step, "time": time, **(details or {})}
        )


class OracleError(DualEnkfException):
    """Raised when a Hamiltonian oracle returns a non-finite value"""

    def __init__(self, query: str, details: Dict[str, Any] = None):
        super().__init__(
            message=f"Oracle returned a non-finite value for query {query}",
            error_code="ORACLE_ERROR",
            details={"query": query, **(details or {})}
        )


class CostOverflowError(DualEnkfException):
    """Raised when the risk-sensitive exponential cannot be represented"""

    def __init__(self, theta: float, max_cost: float, details: Dict[str, Any] = None):
        self.theta = theta
        super().__init__(
            message=(
                f"exp(theta*J) overflows for theta={theta:g} (max J={max_cost:.3e}); "
                f"use a smaller theta or a shorter horizon"
            ),
            error_code="COST_OVERFLOW",
            details={"theta": theta, "max_cost": max_cost, **(details or {})}
        )
