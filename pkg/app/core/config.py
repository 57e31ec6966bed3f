"""
Configuration Management

Two layers:

- Settings: runtime settings loaded from environment variables (and .env) with
  validation and default values.
- ExperimentConfig: per-run experiment configuration, one TOML table per
  module, merged with command-line overrides (flags > file > defaults).
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

from app.core.exceptions import ConfigurationError, InsufficientParticlesError
from app.models.enums import (
    DiagnosticCheck,
    DualMode,
    EtaConvention,
    GainMode,
    ObjectiveKind,
    OutputFormat,
    Prop2Mode,
    SnapshotMode,
    SystemPreset,
    Variant,
)
from app.models.presets import PendulumParams, ScalarParams, SmdParams


class Settings(BaseSettings):
    """Application settings loaded from environment variables"""

    # Logging Configuration
    LOG_LEVEL: str = Field(
        default="INFO",
        description="Logging level"
    )
    LOG_JSON: bool = Field(
        default=False,
        description="Render log events as JSON lines instead of console output"
    )

    # Artifacts
    OUTPUT_DIR: str = Field(
        default="runs",
        description="Default root directory for run artifacts"
    )

    # Covariance regularization (relative to trace(S)/d)
    JITTER_START: float = Field(
        default=1e-8,
        description="First jitter tried when a Cholesky factorization fails"
    )
    JITTER_MAX: float = Field(
        default=1e-4,
        description="Largest jitter tried before reporting a singular covariance"
    )
    JITTER_GROWTH: float = Field(
        default=10.0,
        description="Jitter escalation factor"
    )

    # Execution
    WORKERS: int = Field(
        default=1,
        description="Thread pool width for seed sweeps (1 runs serially)"
    )
    DIVERGENCE_PROBES: int = Field(
        default=20,
        description="Random states used by the divergence-free premise check"
    )

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v):
        """Validate log level"""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"LOG_LEVEL must be one of {valid_levels}")
        return v.upper()

    @field_validator("JITTER_START", "JITTER_MAX", "JITTER_GROWTH")
    @classmethod
    def validate_positive(cls, v):
        if v <= 0:
            raise ValueError("jitter parameters must be positive")
        return v

    @field_validator("WORKERS", "DIVERGENCE_PROBES")
    @classmethod
    def validate_count(cls, v):
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get application settings"""
    return settings


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

Matrix = List[List[float]]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CustomSystemConfig(_Section):
    """Inline LTI matrices for the `custom` preset"""
    A: Matrix
    B: Matrix
    sigma: Matrix
    C: Matrix
    R: Matrix
    G: Matrix


class SystemConfig(_Section):
    preset: SystemPreset = Field(default=SystemPreset.SMD, description="Model preset")
    smd: SmdParams = Field(default_factory=SmdParams)
    pendulum: PendulumParams = Field(default_factory=PendulumParams)
    scalar: ScalarParams = Field(default_factory=ScalarParams)
    custom: Optional[CustomSystemConfig] = None


class ObjectiveConfig(_Section):
    kind: ObjectiveKind = Field(default=ObjectiveKind.SOC, description="soc or rsc")
    theta: float = Field(default=1.0, description="Risk parameter (rsc only)")
    variants: List[Variant] = Field(
        default_factory=Variant.all_variants,
        description="Variants swept by the smd and pendulum experiments"
    )
    sweep_theta: float = Field(default=1.0, gt=0, description="|theta| used for LEQGP / LEQGN in sweeps")


class SolverConfig(_Section):
    N: int = Field(default=1000, ge=2, description="Particle count")
    dt: float = Field(default=0.01, gt=0, description="Time step")
    T: float = Field(default=5.0, gt=0, description="Horizon")
    seed: int = Field(default=0, ge=0, description="Root seed")
    seeds: int = Field(default=10, ge=1, description="Seeds averaged by sweeps")
    prop2: Prop2Mode = Prop2Mode.OFF
    snapshots: SnapshotMode = SnapshotMode.STATS
    eta_convention: EtaConvention = EtaConvention.CONSISTENT
    dual: DualMode = DualMode.INVERSE
    are_tol: float = Field(default=1e-10, gt=0, description="ARE residual tolerance")
    are_t_max: float = Field(default=500.0, gt=0, description="ARE relaxation horizon")


class PolicyConfig(_Section):
    n_samples: int = Field(default=100, ge=1, description="Simulator averaging N_s for the model-free gain")
    gain_mode: Optional[GainMode] = Field(default=None, description="Defaults to stationary for the pendulum")
    stationary_window: float = Field(
        default=0.0,
        ge=0,
        description="Stationary gains invert the mean covariance over t in [0, window]; 0 uses t = 0 alone",
    )
    model_free: bool = Field(default=False, description="Use the Hamiltonian oracle instead of B")


class RolloutConfig(_Section):
    M: int = Field(default=100, ge=2, description="Number of rollouts")
    T: float = Field(default=10.0, gt=0, description="Simulation horizon")
    dt: float = Field(default=0.01, gt=0, description="Simulation step")
    x0: Optional[List[float]] = Field(default=None, description="Initial state (defaults to target + offset)")
    init_spread: float = Field(default=0.05, ge=0, description="Std of the Gaussian spread around x0")
    angle_tolerance: float = Field(default=0.2, gt=0)
    position_tolerance: float = Field(default=0.5, gt=0)
    success_fraction: float = Field(default=0.8, ge=0, le=1)
    baseline: bool = Field(default=True, description="Also roll out the zero-control baseline")


class DiagnosticsConfig(_Section):
    check: DiagnosticCheck = DiagnosticCheck.DUAL
    grid_h: float = Field(default=1e-3, gt=0)
    grid_L: float = Field(default=8.0, gt=0)
    S: float = Field(default=1.0, gt=0, description="Density variance for the Poisson oracle")
    field_scale: float = Field(default=1.0, gt=0, description="Multiplier applied to the interaction field")
    Ns: List[int] = Field(default_factory=lambda: [100, 1000, 10000])
    seeds: int = Field(default=20, ge=1)

    @field_validator("Ns")
    @classmethod
    def validate_increasing(cls, v):
        if not v:
            raise ValueError("Ns must not be empty")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("Ns must be strictly increasing")
        return v


class OutputConfig(_Section):
    directory: str = Field(default_factory=lambda: settings.OUTPUT_DIR)
    format: OutputFormat = OutputFormat.CSV


class ExperimentConfig(BaseSettings):
    """Full experiment configuration, one section per module"""

    system: SystemConfig = Field(default_factory=SystemConfig)
    objective: ObjectiveConfig = Field(default_factory=ObjectiveConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)
    rollout: RolloutConfig = Field(default_factory=RolloutConfig)
    diagnostics: DiagnosticsConfig = Field(default_factory=DiagnosticsConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    model_config = SettingsConfigDict(extra="forbid", case_sensitive=True)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        # Layers are merged explicitly in parse_config; environment never leaks in
        return (init_settings,)

    def state_dim(self) -> int:
        preset = self.system.preset
        if preset == SystemPreset.SCALAR:
            return 1
        if preset == SystemPreset.SMD:
            return 2
        if preset == SystemPreset.PENDULUM:
            return 4
        return len(self.system.custom.A) if self.system.custom else 0


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge override into a copy of base"""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_toml(path: Path) -> Dict[str, Any]:
    """Read a TOML config file through the pydantic-settings TOML source"""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError("config", message=f"Config file not found: {path}")
    try:
        return dict(TomlConfigSettingsSource(ExperimentConfig, toml_file=path)())
    except ValueError as exc:
        # tomllib.TOMLDecodeError subclasses ValueError
        raise ConfigurationError("config", message=f"Cannot parse {path}: {exc}") from exc


def _format_validation_error(exc: ValidationError):
    unknown = []
    problems = []
    for err in exc.errors():
        key = ".".join(str(part) for part in err["loc"])
        if err["type"] == "extra_forbidden":
            unknown.append(key)
        else:
            problems.append({"key": key, "expected": err["type"], "message": err["msg"]})

    if unknown:
        return ConfigurationError(
            unknown[0],
            message=f"Unknown configuration keys: {', '.join(unknown)}",
            details={"unknown_keys": unknown, "problems": problems},
        )
    first = problems[0]
    return ConfigurationError(
        first["key"],
        message=f"Invalid value for {first['key']}: {first['message']} (expected {first['expected']})",
        details={"problems": problems},
    )


def parse_config(
    path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None,
    defaults: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """
    Build a validated ExperimentConfig.

    Args:
        path: optional TOML file
        overrides: nested dict of command-line flags (highest precedence)
        defaults: nested dict of subcommand defaults (below the file)

    Raises:
        ConfigurationError: unknown keys, type mismatches, unreadable file
        InsufficientParticlesError: N < d + 1
    """
    merged = dict(defaults or {})
    if path is not None:
        merged = deep_merge(merged, load_toml(path))
    merged = deep_merge(merged, overrides or {})

    try:
        cfg = ExperimentConfig(**merged)
    except ValidationError as exc:
        raise _format_validation_error(exc) from exc

    if cfg.system.preset == SystemPreset.CUSTOM and cfg.system.custom is None:
        raise ConfigurationError("system.custom", message="Preset 'custom' requires a [system.custom] table")

    d = cfg.state_dim()
    if cfg.solver.N < d + 1:
        raise InsufficientParticlesError(cfg.solver.N, d + 1)
    return cfg


def load_manifest(path: Path, overrides: Optional[Dict[str, Any]] = None) -> Tuple[str, ExperimentConfig]:
    """
    Return (subcommand, config) recorded in a run manifest.

    overrides (typically just output.directory) are merged over the recorded config.
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigurationError("manifest", message=f"Cannot read manifest {path}: {exc}") from exc
    try:
        command = payload["command"]
        config = payload["config"]
    except KeyError as exc:
        raise ConfigurationError("manifest", message=f"Manifest {path} is missing {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigurationError("manifest", message=f"Manifest {path} has a malformed config section")
    return command, parse_config(overrides=deep_merge(config, overrides or {}))
