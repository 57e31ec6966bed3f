"""
Report Models

Pydantic records written as JSON summaries next to the CSV artifacts. Matrices
are carried as nested lists so that the JSON is directly plottable.
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

Matrix = List[List[float]]


class RunManifest(BaseModel):
    """Everything needed to re-run a subcommand and reproduce its outputs"""

    command: str
    seed: int
    build_id: str
    config: Dict[str, Any]


class RiccatiSummary(BaseModel):
    variant: str
    theta: float
    T: float
    dt: float
    P0: Matrix
    g0: float
    S0: Matrix
    are_solution: Matrix
    are_residual: float
    dual_consistency: Optional[float] = None


class EnkfSummary(BaseModel):
    variant: str
    theta: float
    N: int
    T: float
    dt: float
    seed: int
    n0: List[float]
    S0: Matrix
    reference_S0: Optional[Matrix] = None
    error: Optional[float] = None
    relative_error: Optional[float] = None
    noise: Dict[str, Any] = Field(default_factory=dict)
    model_free: bool = False
    coordinates: str = "state"


class VariantError(BaseModel):
    """Terminal error of one variant averaged over seeds"""

    variant: str
    N: int
    error: float
    stderr: float
    seeds: int
    theta: float
    are_residual: float


class SmdSummary(BaseModel):
    results: List[VariantError]


class RolloutSummary(BaseModel):
    variant: str
    M: int
    T: float
    dt: float
    value: float
    stderr: float
    kind: str
    theta: Optional[float] = None
    stabilized_fraction: Optional[float] = None
    policy: str = "linear"
    oracle_queries: Optional[int] = None


class PendulumVariantResult(BaseModel):
    variant: str
    controlled: RolloutSummary
    baseline: Optional[RolloutSummary] = None
    stabilized: bool
    gain: Matrix


class PendulumSummary(BaseModel):
    success_fraction: float
    results: List[PendulumVariantResult]


class DiagnosticReport(BaseModel):
    check: str
    passed: bool
    values: Dict[str, Any] = Field(default_factory=dict)
