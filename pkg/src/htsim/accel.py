"""Accelerator pool model: function catalog, unit states, status register.

Latencies and dataframe sizes are fixed characterization numbers for the
ten supported functions; region sizes used elsewhere are dataframe bytes
divided by the 8-byte block granule.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from operator import attrgetter

from .isa import KeynameMap

BLOCK_BYTES = 8


class UnitState(Enum):
    IDLE = "idle"
    RUNNING = "running"
    WAIT_CDB = "wait_cdb"


class UnitBusy(RuntimeError):
    pass


@dataclass(frozen=True)
class FunctionSpec:
    keyname: str
    accel_id: int
    latency: int
    dataframe_bytes: int

    @property
    def region_blocks(self) -> int:
        return self.dataframe_bytes // BLOCK_BYTES


# keyname -> (latency cycles, dataframe bytes); accelerator IDs are assigned
# in this order starting at 0x01.
_FUNCTION_TABLE = [
    ("real_fir", 921, 40),
    ("complex_fir", 3696, 40),
    ("adaptive_fir", 4384, 40),
    ("iir", 2450, 40),
    ("vector_dot", 53, 40),
    ("vector_add", 131, 40),
    ("vector_max", 55, 40),
    ("fft_256", 18673, 256),
    ("dct_64", 874, 64),
    ("correlation", 753, 40),
]


@dataclass(frozen=True)
class AcceleratorCatalog:
    """The set of accelerated functions and how many units each gets."""

    functions: tuple[FunctionSpec, ...]
    instances: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for name in self.instances:
            if self.lookup(name) is None:
                raise KeyError(f"instance count for unknown function {name!r}")

    def lookup(self, keyname: str) -> FunctionSpec | None:
        for spec in self.functions:
            if spec.keyname == keyname:
                return spec
        return None

    def by_id(self, accel_id: int) -> FunctionSpec | None:
        for spec in self.functions:
            if spec.accel_id == accel_id:
                return spec
        return None

    def count(self, keyname: str) -> int:
        return self.instances.get(keyname, 1)

    def keymap(self) -> KeynameMap:
        return KeynameMap({spec.keyname: spec.accel_id for spec in self.functions})

    def customized(
        self,
        latencies: dict[str, int] | None = None,
        instances: dict[str, int] | None = None,
    ) -> AcceleratorCatalog:
        """New catalog with latency and instance-count overrides applied."""
        latencies = latencies or {}
        for name in latencies:
            if self.lookup(name) is None:
                raise KeyError(f"latency override for unknown function {name!r}")
        functions = tuple(
            replace(spec, latency=latencies[spec.keyname])
            if spec.keyname in latencies
            else spec
            for spec in self.functions
        )
        merged = dict(self.instances)
        merged.update(instances or {})
        return AcceleratorCatalog(functions=functions, instances=merged)

    def uniform_instances(self, count: int) -> AcceleratorCatalog:
        return self.customized(
            instances={spec.keyname: count for spec in self.functions}
        )


def default_catalog() -> AcceleratorCatalog:
    functions = tuple(
        FunctionSpec(keyname=name, accel_id=i, latency=lat, dataframe_bytes=df)
        for i, (name, lat, df) in enumerate(_FUNCTION_TABLE, start=1)
    )
    return AcceleratorCatalog(functions=functions)


@dataclass(eq=False)
class AcceleratorUnit:
    """One accelerator instance; busy from delivery until its CDB broadcast."""

    index: int
    spec: FunctionSpec
    state: UnitState = UnitState.IDLE
    remaining: int = 0
    task_seq: int | None = None
    abort_pending: bool = False
    busy_cycles: int = 0
    pool: "AcceleratorPool | None" = field(default=None, repr=False)

    @property
    def busy(self) -> bool:
        return self.state is not UnitState.IDLE

    def deliver(self, task_seq: int):
        if self.busy:
            raise UnitBusy(
                f"unit {self.index} ({self.spec.keyname}) already holds task {self.task_seq}"
            )
        self.state = UnitState.RUNNING
        self.remaining = self.spec.latency
        self.task_seq = task_seq
        self.abort_pending = False
        if self.pool is not None:
            self.pool._active.add(self)

    def abort(self):
        # Freed at the next cycle boundary, not immediately.
        self.abort_pending = True
        if self.pool is not None:
            self.pool._active.add(self)

    def release(self):
        self.state = UnitState.IDLE
        self.remaining = 0
        self.task_seq = None
        self.abort_pending = False
        if self.pool is not None:
            self.pool._active.discard(self)


@dataclass(frozen=True)
class CompletionEvent:
    cycle: int
    unit_index: int
    task_seq: int


_unit_index = attrgetter("index")


class AcceleratorPool:
    """All units, ordered by global unit index (catalog order, then instance)."""

    def __init__(self, catalog: AcceleratorCatalog):
        self.catalog = catalog
        self.units: list[AcceleratorUnit] = []
        self._by_key: dict[str, list[AcceleratorUnit]] = {}
        # Non-idle (or about-to-free) units; the only ones tick must touch.
        self._active: set[AcceleratorUnit] = set()
        for spec in catalog.functions:
            for _ in range(catalog.count(spec.keyname)):
                unit = AcceleratorUnit(index=len(self.units), spec=spec, pool=self)
                self.units.append(unit)
                self._by_key.setdefault(spec.keyname, []).append(unit)

    @property
    def active_count(self) -> int:
        return len(self._active)

    def active_units(self) -> set[AcceleratorUnit]:
        return self._active

    def idle_unit(self, keyname: str) -> AcceleratorUnit | None:
        for unit in self._by_key.get(keyname, ()):
            if unit.state is UnitState.IDLE:
                return unit
        return None

    def asr(self) -> tuple[int, ...]:
        """Accelerator status register: one busy bit per unit."""
        return tuple(1 if unit.busy else 0 for unit in self.units)

    def tick(self, cycle: int) -> list[CompletionEvent]:
        """Advance every non-idle unit one cycle; completions in unit order."""
        events: list[CompletionEvent] = []
        if not self._active:
            return events
        for unit in sorted(self._active, key=_unit_index):
            if unit.abort_pending:
                unit.release()
                continue
            unit.busy_cycles += 1
            if unit.state is UnitState.RUNNING:
                unit.remaining -= 1
                if unit.remaining == 0:
                    unit.state = UnitState.WAIT_CDB
                    events.append(
                        CompletionEvent(
                            cycle=cycle, unit_index=unit.index, task_seq=unit.task_seq
                        )
                    )
        return events
