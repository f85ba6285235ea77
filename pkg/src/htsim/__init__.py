"""Cycle-accurate simulator for a hardware task scheduler."""

from .accel import AcceleratorCatalog, AcceleratorPool, FunctionSpec, default_catalog
from .config import ConfigError, SimConfig, load_config
from .core import (
    DeadlockDetected,
    Region,
    Scheduler,
    SimStats,
    TaskRecord,
    TaskState,
)
from .isa import (
    Instruction,
    KeynameMap,
    assemble,
    decode,
    disassemble,
    encode,
    from_bytes,
    to_bytes,
)
from .policies import CostModel, Policy, run_naive, run_policy
from .workloads import (
    AudioSpec,
    BenchmarkKind,
    BenchmarkSpec,
    InvalidSpec,
    generate,
    generate_audio,
)

__version__ = "0.1.0"

__all__ = [
    "AcceleratorCatalog",
    "AcceleratorPool",
    "AudioSpec",
    "BenchmarkKind",
    "BenchmarkSpec",
    "ConfigError",
    "CostModel",
    "DeadlockDetected",
    "FunctionSpec",
    "Instruction",
    "InvalidSpec",
    "KeynameMap",
    "Policy",
    "Region",
    "Scheduler",
    "SimConfig",
    "SimStats",
    "TaskRecord",
    "TaskState",
    "assemble",
    "decode",
    "default_catalog",
    "disassemble",
    "encode",
    "from_bytes",
    "generate",
    "generate_audio",
    "load_config",
    "run_naive",
    "run_policy",
    "to_bytes",
    "__version__",
]
