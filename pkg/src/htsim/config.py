"""Simulator configuration: design-time parameters and JSON loading."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    dispatch_width: int = 2
    rs_entries: int = 16
    gpr_count: int = 16
    tlb_entries: int = 32
    tm_base: int = 0xFF00
    tm_size: int = 256
    mem_read_latency: int = 200
    copy_cycles_per_block: int = 4
    interrupt_latency: int = 300
    l2_hit_latency: int = 25
    sw_accesses_per_task: int = 4
    deadlock_horizon: int = 1_000_000
    # Catalog overrides, keyed by function keyname.
    latencies: dict[str, int] = field(default_factory=dict)
    instances: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for name in (
            "dispatch_width",
            "rs_entries",
            "gpr_count",
            "tlb_entries",
            "tm_size",
            "deadlock_horizon",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in (
            "tm_base",
            "mem_read_latency",
            "copy_cycles_per_block",
            "interrupt_latency",
            "l2_hit_latency",
            "sw_accesses_per_task",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.tm_base + self.tm_size > 1 << 16:
            raise ConfigError("transactional memory region exceeds the 16-bit block space")
        for name, value in self.latencies.items():
            if value < 0:
                raise ConfigError(f"latency override for {name} must be >= 0")
        for name, value in self.instances.items():
            if value < 1:
                raise ConfigError(f"instance count for {name} must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> SimConfig:
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in data.items():
            if key in ("latencies", "instances"):
                if not isinstance(value, dict) or not all(
                    isinstance(k, str) and isinstance(v, int) and not isinstance(v, bool)
                    for k, v in value.items()
                ):
                    raise ConfigError(f"{key} must map function names to integers")
            elif not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{key} must be an integer, got {value!r}")
            kwargs[key] = value
        return cls(**kwargs)


def load_config(path: str) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return SimConfig.from_dict(data)
