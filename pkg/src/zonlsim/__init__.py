"""Cycle-level model of a shared-L1 FP cluster with nested hardware loops
and a double-buffering-aware banked TCDM."""

from .isa import ConfigError, FrepConfig, Instruction, StreamConfig, StreamDim, classify
from .memory import TcdmConfig
from .kernels import MatmulProblem
from .cluster import ClusterConfig, PRESETS, RunStats, functional_check, preset, simulate

__all__ = [
    "ConfigError",
    "FrepConfig",
    "Instruction",
    "StreamConfig",
    "StreamDim",
    "classify",
    "TcdmConfig",
    "MatmulProblem",
    "ClusterConfig",
    "RunStats",
    "preset",
    "simulate",
    "PRESETS",
    "functional_check",
]
