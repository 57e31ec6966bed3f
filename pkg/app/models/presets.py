"""
Benchmark Presets

Spring-mass-damper (linear) and inverted pendulum on a cart (nonlinear), plus the
scalar instance used by the Riccati and Poisson oracles. Physical constants are
pydantic models so they can be overridden from configuration.
"""

from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.exceptions import DomainError
from app.models.system import CostSpec, LtiSystem, SystemModel


class SmdParams(BaseModel):
    """Single-mass spring-mass-damper with force input"""
    model_config = ConfigDict(extra="forbid")

    mass: float = Field(default=1.0, description="Mass [kg]")
    stiffness: float = Field(default=1.0, description="Spring constant k [N/m]")
    damping: float = Field(default=0.5, description="Damping coefficient [N s/m]")
    noise_scale: float = Field(default=0.5, description="Force disturbance intensity (sigma = noise_scale * B)")
    state_weight: float = Field(default=1.0, description="C = state_weight * I")
    control_weight: float = Field(default=1.0, description="R = control_weight")
    terminal_weight: float = Field(default=1.0, description="G = terminal_weight * I")


class PendulumParams(BaseModel):
    """Cart-pole with a point mass at the tip; angle measured from the downward vertical"""
    model_config = ConfigDict(extra="forbid")

    cart_mass: float = Field(default=1.0, description="Cart mass [kg]")
    pole_mass: float = Field(default=0.1, description="Pole tip mass [kg]")
    length: float = Field(default=1.0, description="Pole length [m]")
    gravity: float = Field(default=9.81, description="Gravitational acceleration [m/s^2]")
    noise_scale: float = Field(default=0.1, description="Angular-rate disturbance intensity (sigma = noise_scale * e_theta_dot)")
    state_weight: float = Field(default=1.0, description="C = state_weight * I on error coordinates")
    control_weight: float = Field(default=1.0, description="R = control_weight")
    terminal_weight: float = Field(default=10.0, description="G = terminal_weight * I")


class ScalarParams(BaseModel):
    """Scalar LQ instance dX = (aX + bU)dt + sigma dW, c(x) = c x"""
    model_config = ConfigDict(extra="forbid")

    a: float = 0.0
    b: float = 1.0
    c: float = 1.0
    r: float = 1.0
    sigma: float = 1.0
    g: float = 1.0


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not np.isfinite(value) or value <= 0.0:
            raise DomainError(name, value, message=f"{name} must be positive, got {value}")


def _require_non_negative(**values: float) -> None:
    for name, value in values.items():
        if not np.isfinite(value) or value < 0.0:
            raise DomainError(name, value, message=f"{name} must be non-negative, got {value}")


def make_smd_model(params: SmdParams = None) -> Tuple[LtiSystem, CostSpec]:
    """
    2-state (position, velocity) spring-mass-damper:

        A = [[0, 1], [-k/m, -c/m]],  B = [0, 1/m]^T,  sigma = noise_scale * B
    """
    params = params or SmdParams()
    _require_positive(mass=params.mass, control_weight=params.control_weight,
                      terminal_weight=params.terminal_weight, state_weight=params.state_weight)
    _require_non_negative(stiffness=params.stiffness, damping=params.damping, noise_scale=params.noise_scale)

    m, k, c = params.mass, params.stiffness, params.damping
    A = np.array([[0.0, 1.0], [-k / m, -c / m]])
    B = np.array([[0.0], [1.0 / m]])
    lti = LtiSystem(A=A, B=B, sigma=params.noise_scale * B, name="smd")
    cost = CostSpec(
        R=np.array([[params.control_weight]]),
        G=params.terminal_weight * np.eye(2),
        C=params.state_weight * np.eye(2),
    )
    return lti, cost


def make_pendulum_model(params: PendulumParams = None) -> Tuple[SystemModel, CostSpec]:
    """
    4-state cart-pole, state (x, x_dot, theta, theta_dot), theta = 0 hanging down:

        den        = M + m sin^2(theta)
        x_ddot     = (u + m sin(theta)(l theta_dot^2 + g cos(theta))) / den
        theta_ddot = (-u cos(theta) - m l theta_dot^2 cos(theta) sin(theta)
                      - (M + m) g sin(theta)) / (l den)

    The cost is measured from the upright target (0, 0, pi, 0).
    """
    params = params or PendulumParams()
    _require_positive(cart_mass=params.cart_mass, pole_mass=params.pole_mass, length=params.length,
                      gravity=params.gravity, control_weight=params.control_weight,
                      terminal_weight=params.terminal_weight, state_weight=params.state_weight)
    _require_non_negative(noise_scale=params.noise_scale)

    M, m, l, g = params.cart_mass, params.pole_mass, params.length, params.gravity

    def drift(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v, th, om = x[..., 1], x[..., 2], x[..., 3]
        s, c = np.sin(th), np.cos(th)
        den = M + m * s**2
        x_ddot = m * s * (l * om**2 + g * c) / den
        th_ddot = (-m * l * om**2 * c * s - (M + m) * g * s) / (l * den)
        return np.stack([v, x_ddot, om, th_ddot], axis=-1)

    def input_map(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        th = x[..., 2]
        den = M + m * np.sin(th) ** 2
        zero = np.zeros_like(th)
        return np.stack([zero, 1.0 / den, zero, -np.cos(th) / (l * den)], axis=-1)[..., None]

    sigma = np.zeros((4, 1))
    sigma[3, 0] = params.noise_scale

    def diffusion(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(sigma, np.shape(x) + (1,))

    target = np.array([0.0, 0.0, np.pi, 0.0])
    model = SystemModel(
        drift=drift,
        input_map=input_map,
        diffusion=diffusion,
        d=4,
        m=1,
        d_w=1,
        target=target,
        name="pendulum",
        constant_input_map=False,
        constant_diffusion=True,
    )
    cost = CostSpec(
        R=np.array([[params.control_weight]]),
        G=params.terminal_weight * np.eye(4),
        C=params.state_weight * np.eye(4),
        target=target,
    )
    return model, cost


def make_scalar_model(params: ScalarParams = None) -> Tuple[LtiSystem, CostSpec]:
    """Scalar LQ instance used by the Riccati and Poisson oracles"""
    params = params or ScalarParams()
    lti = LtiSystem(A=[[params.a]], B=[[params.b]], sigma=[[params.sigma]], name="scalar")
    cost = CostSpec(R=[[params.r]], G=[[params.g]], C=[[params.c]])
    return lti, cost
