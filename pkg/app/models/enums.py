"""
System Enums

This module defines the enums used throughout the library for objectives,
experiment variants, presets and output options.
"""

from enum import Enum


class ObjectiveKind(str, Enum):
    """Control objective families"""
    SOC = "soc"    # stochastic optimal control (LQG in the LQ case)
    RSC = "rsc"    # risk sensitive control (LEQG in the LQ case)

    def __str__(self):
        return self.value


class Variant(str, Enum):
    """LQ naming of an objective, with the sign of theta for RSC"""
    LQG = "LQG"
    LEQGP = "LEQGP"
    LEQGN = "LEQGN"

    def __str__(self):
        return self.value

    @classmethod
    def all_variants(cls):
        """Get all variants in sweep order"""
        return [cls.LQG, cls.LEQGP, cls.LEQGN]


class SystemPreset(str, Enum):
    """Model presets selectable from configuration"""
    SCALAR = "scalar"
    SMD = "smd"
    PENDULUM = "pendulum"
    CUSTOM = "custom"

    def __str__(self):
        return self.value


class EtaConvention(str, Enum):
    """How RSC scalings of the exploration noise and GA prefactor are read"""
    CONSISTENT = "consistent"   # scalings that keep the ensemble on the dual DRE
    TABULATED = "tabulated"     # the printed table entries, taken literally

    def __str__(self):
        return self.value


class DualMode(str, Enum):
    """How RiccatiSolution.S is produced"""
    INVERSE = "inverse"
    INTEGRATED = "integrated"

    def __str__(self):
        return self.value


class Prop2Mode(str, Enum):
    """Whether to use the reduced-noise configuration when it applies"""
    AUTO = "auto"
    OFF = "off"

    def __str__(self):
        return self.value


class SnapshotMode(str, Enum):
    """What an ensemble run records per grid time"""
    NONE = "none"
    STATS = "stats"
    FULL = "full"

    def __str__(self):
        return self.value


class OutputFormat(str, Enum):
    """Artifact formats"""
    CSV = "csv"
    JSON = "json"

    def __str__(self):
        return self.value


class DiagnosticCheck(str, Enum):
    """Oracles exposed by the diagnose subcommand"""
    POISSON = "poisson"
    DUAL = "dual"
    CONVERGENCE = "convergence"

    def __str__(self):
        return self.value


class GainMode(str, Enum):
    """How a gain schedule is replayed in closed loop"""
    SCHEDULE = "schedule"       # zero-order hold of the time-varying gains
    STATIONARY = "stationary"   # the t=0 gain held over the whole rollout

    def __str__(self):
        return self.value
