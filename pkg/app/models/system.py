"""
Control System and Cost Models

This module defines the domain types shared by every solver:

- SystemModel: nonlinear Ito dynamics dX = (a(X) + b(X)U)dt + sigma(X)dW
- LtiSystem: the linear time invariant specialization (A, B, sigma)
- CostSpec: running cost 1/2(|c(x)|^2 + u^T R u) and terminal cost
- Objective: SOC or RSC(theta)

All model callables are vectorized over leading axes: a state batch of shape
(..., d) maps to drift (..., d), input map (..., d, m) and diffusion (..., d, d_w).
Instances are immutable after construction.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import scipy.linalg

from app.core.exceptions import AssumptionViolationError, DomainError, ShapeError
from app.models.enums import ObjectiveKind, Variant

ArrayFn = Callable[[np.ndarray], np.ndarray]

POSITIVITY_TOL = 1e-12


def _frozen(value: Any, ndim: int = None, name: str = "array") -> np.ndarray:
    arr = np.array(value, dtype=float, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(name, expected=f"{ndim}-d array", actual=arr.shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Nonlinear control system with vectorized drift, input map and diffusion"""

    drift: ArrayFn
    input_map: ArrayFn
    diffusion: ArrayFn
    d: int
    m: int
    d_w: int
    target: np.ndarray = None
    name: str = "custom"
    constant_input_map: bool = False
    constant_diffusion: bool = False

    def __post_init__(self):
        for dim_name in ("d", "m", "d_w"):
            if int(getattr(self, dim_name)) <= 0:
                raise DomainError(dim_name, getattr(self, dim_name))
        target = np.zeros(self.d) if self.target is None else self.target
        target = _frozen(target, 1, "target")
        if target.shape != (self.d,):
            raise ShapeError("target", expected=(self.d,), actual=target.shape)
        object.__setattr__(self, "target", target)

    def a(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.drift(x), dtype=float)
        if out.shape != x.shape:
            raise ShapeError("drift", expected=x.shape, actual=out.shape)
        return out

    def b(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(np.asarray(self.input_map(x), dtype=float), x.shape + (self.m,))
        return out

    def sigma(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(np.asarray(self.diffusion(x), dtype=float), x.shape + (self.d_w,))
        return out

    def controlled_drift(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """a(x) + b(x) u for batches x (..., d), u (..., m)"""
        return self.a(x) + np.einsum("...ij,...j->...i", self.b(x), np.asarray(u, dtype=float))

    def divergence(self, x: np.ndarray, eps: float = 1e-6) -> float:
        """Central-difference estimate of div a at a single state"""
        x = np.asarray(x, dtype=float)
        total = 0.0
        for i in range(self.d):
            step = np.zeros(self.d)
            step[i] = eps
            total += (self.a(x + step)[i] - self.a(x - step)[i]) / (2.0 * eps)
        return float(total)

    def linearize(self, x: np.ndarray = None, eps: float = 1e-6) -> "LtiSystem":
        """Jacobian of a, and b, sigma frozen at x (default: the target)"""
        x = self.target if x is None else np.asarray(x, dtype=float)
        A = np.zeros((self.d, self.d))
        for j in range(self.d):
            step = np.zeros(self.d)
            step[j] = eps
            A[:, j] = (self.a(x + step) - self.a(x - step)) / (2.0 * eps)
        return LtiSystem(A=A, B=np.array(self.b(x)), sigma=np.array(self.sigma(x)), name=f"{self.name}-linearized")

    def shifted(self) -> "SystemModel":
        """The same model in error coordinates e = x - target"""
        target = self.target
        return SystemModel(
            drift=lambda e: self.drift(np.asarray(e) + target),
            input_map=lambda e: self.input_map(np.asarray(e) + target),
            diffusion=lambda e: self.diffusion(np.asarray(e) + target),
            d=self.d,
            m=self.m,
            d_w=self.d_w,
            target=np.zeros(self.d),
            name=f"{self.name}-shifted",
            constant_input_map=self.constant_input_map,
            constant_diffusion=self.constant_diffusion,
        )


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """Linear time invariant system dX = (AX + BU)dt + sigma dW"""

    A: np.ndarray
    B: np.ndarray
    sigma: np.ndarray
    name: str = "lti"

    def __post_init__(self):
        A = _frozen(np.atleast_2d(self.A), 2, "A")
        B = _frozen(np.atleast_2d(self.B), 2, "B")
        sigma = _frozen(np.atleast_2d(self.sigma), 2, "sigma")
        d = A.shape[0]
        if A.shape != (d, d):
            raise ShapeError("A", expected=(d, d), actual=A.shape)
        if B.shape[0] != d:
            raise ShapeError("B", expected=(d, "m"), actual=B.shape)
        if sigma.shape[0] != d:
            raise ShapeError("sigma", expected=(d, "d_w"), actual=sigma.shape)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "sigma", sigma)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def d_w(self) -> int:
        return self.sigma.shape[1]

    @property
    def Sigma(self) -> np.ndarray:
        """sigma sigma^T"""
        return self.sigma @ self.sigma.T

    def to_system_model(self, target: np.ndarray = None) -> SystemModel:
        A, B, sigma = self.A, self.B, self.sigma
        return SystemModel(
            drift=lambda x: np.asarray(x) @ A.T,
            input_map=lambda x: np.broadcast_to(B, np.shape(x) + (B.shape[1],)),
            diffusion=lambda x: np.broadcast_to(sigma, np.shape(x) + (sigma.shape[1],)),
            d=self.d,
            m=self.m,
            d_w=self.d_w,
            target=target,
            name=self.name,
            constant_input_map=True,
            constant_diffusion=True,
        )


@dataclass(frozen=True, eq=False)
class CostSpec:
    """
    Running cost 1/2(|c(x)|^2 + u^T R u) and terminal cost.

    In the quadratic case c(x) = C (x - target) and the terminal cost is
    1/2 (x - target)^T G (x - target), so that the value function
    1/2 x^T P x + g has P_T = G. A general running map may be passed as
    ``output``; a general terminal function as ``terminal_fn``.
    """

    R: np.ndarray
    G: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None
    output: Optional[ArrayFn] = None
    terminal_fn: Optional[ArrayFn] = None
    target: Optional[np.ndarray] = None

    def __post_init__(self):
        R = _frozen(np.atleast_2d(self.R), 2, "R")
        if R.shape[0] != R.shape[1]:
            raise ShapeError("R", expected="square", actual=R.shape)
        if not np.allclose(R, R.T):
            raise DomainError("R", message="Control weight R must be symmetric")
        if np.min(np.linalg.eigvalsh(R)) <= 0.0:
            raise DomainError("R", message="Control weight R must be positive definite")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "_R_factor", scipy.linalg.cho_factor(R))

        if self.C is None and self.output is None:
            raise DomainError("c", message="Either a matrix C or an output function c is required")
        if self.C is not None:
            object.__setattr__(self, "C", _frozen(np.atleast_2d(self.C), 2, "C"))

        if self.G is not None:
            G = _frozen(np.atleast_2d(self.G), 2, "G")
            if G.shape[0] != G.shape[1]:
                raise ShapeError("G", expected="square", actual=G.shape)
            if not np.allclose(G, G.T):
                raise DomainError("G", message="Terminal weight G must be symmetric")
            if np.min(np.linalg.eigvalsh(G)) <= 0.0:
                raise DomainError("G", message="Terminal weight G must be positive definite")
            object.__setattr__(self, "G", G)
        elif self.terminal_fn is None:
            raise DomainError("G", message="Either a matrix G or a terminal function is required")

        if self.target is not None:
            object.__setattr__(self, "target", _frozen(self.target, 1, "target"))

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def is_quadratic(self) -> bool:
        return self.C is not None and self.output is None and self.G is not None and self.terminal_fn is None

    @property
    def R_inv(self) -> np.ndarray:
        R_inv = scipy.linalg.cho_solve(self._R_factor, np.eye(self.m))
        return 0.5 * (R_inv + R_inv.T)

    def solve_R(self, rhs: np.ndarray) -> np.ndarray:
        """R^{-1} rhs"""
        return scipy.linalg.cho_solve(self._R_factor, rhs)

    def _error(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x if self.target is None else x - self.target

    def c(self, x: np.ndarray) -> np.ndarray:
        """Output map c(x), vectorized over leading axes"""
        if self.output is not None:
            return np.asarray(self.output(np.asarray(x, dtype=float)), dtype=float)
        return self._error(x) @ self.C.T

    def running(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """1/2 (|c(x)|^2 + u^T R u)"""
        cx = self.c(x)
        u = np.asarray(u, dtype=float)
        return 0.5 * (np.sum(cx * cx, axis=-1) + np.einsum("...i,ij,...j->...", u, self.R, u))

    def terminal(self, x: np.ndarray) -> np.ndarray:
        """Terminal cost G(x)"""
        if self.terminal_fn is not None:
            return np.asarray(self.terminal_fn(np.asarray(x, dtype=float)), dtype=float)
        e = self._error(x)
        return 0.5 * np.einsum("...i,ij,...j->...", e, self.G, e)

    def shifted(self) -> "CostSpec":
        """The same cost measured on error coordinates e = x - target"""
        if self.target is None:
            return self
        target = self.target
        output = None if self.output is None else (lambda e: self.output(np.asarray(e) + target))
        terminal_fn = None if self.terminal_fn is None else (lambda e: self.terminal_fn(np.asarray(e) + target))
        return CostSpec(R=self.R, G=self.G, C=self.C, output=output, terminal_fn=terminal_fn)


@dataclass(frozen=True)
class Objective:
    """SOC, or RSC with nonzero risk parameter theta"""

    kind: ObjectiveKind = ObjectiveKind.SOC
    theta: float = 0.0

    def __post_init__(self):
        kind = ObjectiveKind(self.kind)
        object.__setattr__(self, "kind", kind)
        theta = float(self.theta)
        if kind == ObjectiveKind.RSC:
            if theta == 0.0 or not np.isfinite(theta):
                raise DomainError("theta", theta, message="RSC requires a finite nonzero theta")
        else:
            theta = 0.0
        object.__setattr__(self, "theta", theta)

    @classmethod
    def soc(cls) -> "Objective":
        return cls(ObjectiveKind.SOC)

    @classmethod
    def rsc(cls, theta: float) -> "Objective":
        return cls(ObjectiveKind.RSC, theta)

    @classmethod
    def from_variant(cls, variant: Variant, theta: float = 1.0) -> "Objective":
        """Build the objective of a sweep variant; theta's magnitude is used for LEQG*"""
        variant = Variant(variant)
        if variant == Variant.LQG:
            return cls.soc()
        sign = 1.0 if variant == Variant.LEQGP else -1.0
        return cls.rsc(sign * abs(theta))

    @property
    def is_rsc(self) -> bool:
        return self.kind == ObjectiveKind.RSC

    @property
    def kappa(self) -> float:
        """Scale of the log transform: 1 for SOC, |theta| for RSC"""
        return abs(self.theta) if self.is_rsc else 1.0

    @property
    def variant(self) -> Variant:
        if not self.is_rsc:
            return Variant.LQG
        return Variant.LEQGP if self.theta > 0 else Variant.LEQGN

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "theta": self.theta, "variant": self.variant.value}


@dataclass
class ValidationReport:
    """Outcome of the LQ standing-assumption checks"""

    controllable: bool
    observable: bool
    positive: bool
    min_eigenvalue: float = 0.0
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.controllable and self.observable and self.positive

    def failures(self) -> List[str]:
        failed = []
        if not self.controllable:
            failed.append("controllability")
        if not self.observable:
            failed.append("observability")
        if not self.positive:
            failed.append("positivity")
        return failed

    def to_dict(self) -> Dict[str, Any]:
        return {
            "controllable": self.controllable,
            "observable": self.observable,
            "positive": self.positive,
            "min_eigenvalue": self.min_eigenvalue,
            "passed": self.passed,
            **self.details,
        }


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def check_lq_shapes(lti: LtiSystem, cost: CostSpec) -> None:
    """Raise ShapeError unless A, B, sigma, C, R, G fit together"""
    if cost.C is None:
        raise ShapeError("C", expected="matrix (quadratic cost)", actual=None)
    if cost.C.shape[1] != lti.d:
        raise ShapeError("C", expected=("q", lti.d), actual=cost.C.shape)
    if cost.R.shape != (lti.m, lti.m):
        raise ShapeError("R", expected=(lti.m, lti.m), actual=cost.R.shape)
    if cost.G is not None and cost.G.shape != (lti.d, lti.d):
        raise ShapeError("G", expected=(lti.d, lti.d), actual=cost.G.shape)


def validate_lq_assumptions(lti: LtiSystem, cost: CostSpec, obj: Objective) -> ValidationReport:
    """
    Check controllability of (A, B), observability of (A, C) and that
    B R^{-1} B^T - theta sigma sigma^T is positive semi-definite (theta = 0 for SOC).
    """
    check_lq_shapes(lti, cost)
    d = lti.d
    ctrb_rank = int(np.linalg.matrix_rank(controllability_matrix(lti.A, lti.B)))
    obsv_rank = int(np.linalg.matrix_rank(observability_matrix(lti.A, cost.C)))

    M = lti.B @ cost.solve_R(lti.B.T) - obj.theta * lti.Sigma
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (M + M.T))))
    scale = max(1.0, float(np.max(np.abs(M))))

    return ValidationReport(
        controllable=ctrb_rank == d,
        observable=obsv_rank == d,
        positive=min_eig >= -POSITIVITY_TOL * scale,
        min_eigenvalue=min_eig,
        details={"controllability_rank": ctrb_rank, "observability_rank": obsv_rank, "d": d},
    )


def ensure_lq_assumptions(lti: LtiSystem, cost: CostSpec, obj: Objective) -> ValidationReport:
    """validate_lq_assumptions, raising AssumptionViolationError on failure"""
    report = validate_lq_assumptions(lti, cost, obj)
    if not report.passed:
        raise AssumptionViolationError(report.failures(), details=report.to_dict())
    return report
