"""Out-of-order task scheduling engine with branch speculation.

Pipeline per cycle: accelerator tick, one CDB broadcast, branch timers,
issue of every ready task with an idle unit, then in-order dispatch of up
to ``dispatch_width`` instructions.  Control instructions execute in the
dispatch stage; task instructions go through hazard detection into
reservation stations and wait for their dependencies on the common data
bus.

Speculation (depth 1) predicts branches not-taken.  Outputs of speculative
tasks are renamed into a transactional memory window through the task
lookup buffer (TLB); commit retains the mappings for later readers, squash
discards them, aborts in-flight speculative tasks and restores GPR, loop
stack and PC from the entry snapshot.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum

from .accel import AcceleratorCatalog, AcceleratorPool, CompletionEvent, UnitState
from .config import SimConfig
from .isa import (
    BRANCH_BR,
    BRANCH_MR,
    BRANCH_RR,
    CTRL_INDIRECT,
    OP_ADD,
    OP_IF,
    OP_JUMP,
    OP_LBEG,
    OP_LEND,
    OP_MOV,
    OP_MUL,
    Instruction,
    Program,
    branch_class,
)

GPR_MASK = (1 << 64) - 1
BLOCK_MASK = (1 << 16) - 1


class ProgramError(RuntimeError):
    pass


class LEndWithoutLBeg(ProgramError):
    pass


class MalformedBranch(ProgramError):
    pass


class DeadlockDetected(RuntimeError):
    pass


class TmExhaustedUnderSpeculation(RuntimeError):
    pass


class UnknownAcceleratorId(ProgramError):
    pass


@dataclass(frozen=True)
class Region:
    base: int
    size: int

    def overlaps(self, other: Region) -> bool:
        if self.size <= 0 or other.size <= 0:
            return False
        return self.base < other.base + other.size and other.base < self.base + self.size

    def contains_block(self, block: int) -> bool:
        return self.size > 0 and self.base <= block < self.base + self.size

    def contains(self, other: Region) -> bool:
        if self.size <= 0 or other.size <= 0:
            return False
        return self.base <= other.base and other.base + other.size <= self.base + self.size


class TaskState(Enum):
    WAITING = "waiting"
    READY = "ready"
    RUNNING = "running"
    DONE = "done"
    ABORTED = "aborted"


@dataclass
class TaskRecord:
    seq: int
    program_index: int
    instr: Instruction
    keyname: str
    latency: int
    arch_in: Region
    arch_out: Region
    eff_in: Region
    eff_out: Region
    deps: set[int]
    initial_deps: frozenset[int]
    token: int
    spec_id: int | None = None
    state: TaskState = TaskState.WAITING
    unit_index: int | None = None
    dispatched: int = 0
    issued: int | None = None
    finished: int | None = None
    completed: int | None = None
    aborted_cycle: int | None = None


@dataclass
class TlbEntry:
    orig: Region
    mapped: Region
    spec_id: int | None
    committed: bool = False


@dataclass
class LoopFrame:
    body_start: int
    counter_reg: int
    remaining: int


@dataclass
class PendingBranch:
    kind: int
    taken_pc: int
    not_taken_pc: int
    threshold: int
    speculating: bool
    block: int | None = None
    deps: set[int] = field(default_factory=set)
    resolve_at: int | None = None
    producer_seq: int | None = None


@dataclass
class Speculation:
    spec_id: int
    branch: PendingBranch
    gpr: list[int]
    loop_stack: list[LoopFrame]
    entered: int


@dataclass
class SimStats:
    policy: str = ""
    makespan: int = 0
    total_cycles: int = 0
    tasks_dispatched: int = 0
    tasks_completed: int = 0
    tasks_aborted: int = 0
    scalar_ops: int = 0
    stalls: dict[str, int] = field(default_factory=dict)
    spec_entered: int = 0
    spec_committed: int = 0
    spec_squashed: int = 0
    tlb_evictions: int = 0
    evicted_blocks: int = 0
    tm_exhausted_events: int = 0
    busy_cycles: dict[str, int] = field(default_factory=dict)
    utilization: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "makespan": self.makespan,
            "total_cycles": self.total_cycles,
            "tasks_dispatched": self.tasks_dispatched,
            "tasks_completed": self.tasks_completed,
            "tasks_aborted": self.tasks_aborted,
            "scalar_ops": self.scalar_ops,
            "stalls": dict(sorted(self.stalls.items())),
            "speculation": {
                "entered": self.spec_entered,
                "committed": self.spec_committed,
                "squashed": self.spec_squashed,
            },
            "tlb": {
                "evictions": self.tlb_evictions,
                "evicted_blocks": self.evicted_blocks,
                "tm_exhausted_events": self.tm_exhausted_events,
            },
            "busy_cycles": dict(sorted(self.busy_cycles.items())),
            "utilization": {k: round(v, 6) for k, v in sorted(self.utilization.items())},
        }


# Dispatch-loop outcomes for one control instruction.
_ADVANCE = 0  # consumed a slot, group may continue
_TRANSFER = 1  # consumed a slot, control transfer ends the group
_BLOCKED = 2  # not consumed, retry in a later cycle


def _signed16(value: int) -> int:
    return value - 0x10000 if value >= 0x8000 else value


def _int_key(key) -> int:
    # JSON object keys arrive as strings; accept "0x" hex alongside decimal.
    if isinstance(key, str):
        return int(key, 0)
    return int(key)


def normalize_values(values: dict | None) -> tuple[dict[int, int], dict[int, int]]:
    """Split a workload values blob into (preload, result_tokens) int-keyed maps."""
    preload: dict[int, int] = {}
    tokens: dict[int, int] = {}
    if values:
        for key, val in values.get("preload", {}).items():
            preload[_int_key(key)] = int(val)
        for key, val in values.get("result_tokens", {}).items():
            tokens[_int_key(key)] = int(val)
    return preload, tokens


class Scheduler:
    """Cycle-stepped scheduler over one program and one accelerator pool."""

    def __init__(
        self,
        program: Program,
        catalog: AcceleratorCatalog,
        config: SimConfig | None = None,
        *,
        speculation: bool = True,
        values: dict | None = None,
        dispatch_overhead: int = 0,
        broadcast_delay: int = 0,
        trace: bool = False,
    ):
        self.program = list(program)
        self.catalog = catalog
        self.cfg = config or SimConfig()
        self.speculation_enabled = speculation
        self.dispatch_overhead = dispatch_overhead
        self.broadcast_delay = broadcast_delay

        self.cycle = 0
        self.pc = 0
        self.gpr = [0] * self.cfg.gpr_count
        preload, tokens = normalize_values(values)
        self.memory: dict[int, int] = dict(preload)
        self.result_tokens = tokens

        self.pool = AcceleratorPool(catalog)
        self.records: list[TaskRecord] = []
        self.rs: list[TaskRecord] = []
        self.live: dict[int, TaskRecord] = {}
        self.tracker: dict[Region, int] = {}
        self.cdb: deque[CompletionEvent] = deque()
        self.loop_stack: list[LoopFrame] = []

        self.tlb: list[TlbEntry] = []
        self.tm_free: list[tuple[int, int]] = [(self.cfg.tm_base, self.cfg.tm_size)]
        self.tm_wait = False

        self.pending_branch: PendingBranch | None = None
        self.active_spec: Speculation | None = None
        self.spec_counter = 0

        self.stall_timer = 0
        self.stall_reason = ""
        self.stats = SimStats()
        self.last_progress = 0
        self.last_activity = 0

        self.trace: list[dict] | None = [] if trace else None
        self._cycle_trace: dict = {}
        self._blocked_reason = ""
        # Skip the RS scan on cycles where nothing could have become issuable.
        self._issue_work = True

    # ---- per-cycle phases -------------------------------------------------

    def step(self):
        self.cycle += 1
        self._cycle_trace = {}
        self._blocked_reason = ""
        timer_blocked = self.stall_timer > 0

        active_before = self.pool.active_count
        for event in self.pool.tick(self.cycle):
            self.cdb.append(event)
        if self.pool.active_count < active_before:
            self._issue_work = True  # an aborted unit was freed
        self._cdb_phase()
        self._branch_timer_phase()
        self._issue_phase()
        self._dispatch_phase()

        if timer_blocked:
            self.stats.stalls[self.stall_reason] = (
                self.stats.stalls.get(self.stall_reason, 0) + 1
            )
            self.stall_timer -= 1
            self._cycle_trace["stall"] = self.stall_reason
        elif self._blocked_reason:
            self.stats.stalls[self._blocked_reason] = (
                self.stats.stalls.get(self._blocked_reason, 0) + 1
            )
            self._cycle_trace["stall"] = self._blocked_reason
        if self.trace is not None and self._cycle_trace:
            self._cycle_trace["cycle"] = self.cycle
            self.trace.append(self._cycle_trace)

    def _cdb_phase(self):
        while self.cdb:
            event = self.cdb[0]
            rec = self.records[event.task_seq]
            if rec.state is TaskState.ABORTED:
                self.cdb.popleft()
                continue
            if event.cycle + self.broadcast_delay > self.cycle:
                return
            self.cdb.popleft()
            self._broadcast(rec, event)
            return

    def _broadcast(self, rec: TaskRecord, event: CompletionEvent):
        rec.state = TaskState.DONE
        rec.finished = event.cycle
        rec.completed = self.cycle
        self.pool.units[event.unit_index].release()
        if rec.eff_out.size > 0:
            self.memory[rec.eff_out.base] = rec.token
        for region in [r for r, seq in self.tracker.items() if seq == rec.seq]:
            del self.tracker[region]
        del self.live[rec.seq]
        for entry in self.rs:
            entry.deps.discard(rec.seq)
            if entry.state is TaskState.WAITING and not entry.deps:
                entry.state = TaskState.READY
        br = self.pending_branch
        if br is not None:
            if br.kind == BRANCH_MR and rec.seq in br.deps:
                br.deps.discard(rec.seq)
                if not br.deps and br.resolve_at is None:
                    # read issues the cycle after the block is clear
                    br.resolve_at = self.cycle + self.cfg.mem_read_latency + 1
            elif br.kind == BRANCH_BR and br.producer_seq == rec.seq:
                self._resolve_branch(rec.token > br.threshold)
        self.last_progress = self.cycle
        self.last_activity = max(self.last_activity, event.cycle)
        self._issue_work = True  # freed a unit, possibly woke dependents
        self._cycle_trace["broadcast"] = rec.seq

    def _branch_timer_phase(self):
        br = self.pending_branch
        if (
            br is not None
            and br.kind == BRANCH_MR
            and br.resolve_at is not None
            and self.cycle >= br.resolve_at
        ):
            value = self.memory.get(br.block, 0)
            self._resolve_branch(value > br.threshold)

    def _issue_phase(self):
        if not self._issue_work:
            return
        self._issue_work = False
        issued = []
        for rec in self.rs:
            if rec.state is not TaskState.READY:
                continue
            unit = self.pool.idle_unit(rec.keyname)
            if unit is None:
                continue
            unit.deliver(rec.seq)
            rec.state = TaskState.RUNNING
            rec.issued = self.cycle
            rec.unit_index = unit.index
            issued.append(rec)
            self.last_progress = self.cycle
        if issued:
            gone = {r.seq for r in issued}
            self.rs = [r for r in self.rs if r.seq not in gone]
            self._cycle_trace["issued"] = [[r.seq, r.unit_index] for r in issued]

    def _dispatch_phase(self):
        used = 0
        while used < self.cfg.dispatch_width:
            if self.stall_timer > 0:
                break
            if self.pending_branch is not None and not self.pending_branch.speculating:
                self._blocked_reason = "branch_wait"
                break
            if self.tm_wait:
                self._blocked_reason = "tm_exhausted"
                break
            if self.pc >= len(self.program):
                break
            instr = self.program[self.pc]
            if instr.is_task:
                if len(self.rs) >= self.cfg.rs_entries:
                    if used == 0:
                        self._blocked_reason = "rs_full"
                    break
                if not self._dispatch_task(instr):
                    break
                used += 1
                self.last_progress = self.cycle
                self.last_activity = self.cycle
                if self.dispatch_overhead > 0:
                    self.stall_timer = self.dispatch_overhead
                    self.stall_reason = "sw_overhead"
                    break
            else:
                action = self._exec_control(instr)
                if action == _BLOCKED:
                    break
                used += 1
                self.stats.scalar_ops += 1
                self.last_progress = self.cycle
                self.last_activity = self.cycle
                if action == _TRANSFER:
                    break
        if used:
            self._blocked_reason = ""

    # ---- dispatch of task instructions ------------------------------------

    def _dispatch_task(self, instr: Instruction) -> bool:
        spec = self.catalog.by_id(instr.opcode)
        if spec is None:
            raise UnknownAcceleratorId(
                f"pc {self.pc}: no accelerator with ID 0x{instr.opcode:02x}"
            )
        if instr.control & CTRL_INDIRECT:
            in_base = self.gpr[self._reg(instr.in_base)] & BLOCK_MASK
            out_base = self.gpr[self._reg(instr.out_base)] & BLOCK_MASK
        else:
            in_base, out_base = instr.in_base, instr.out_base
        arch_in = Region(in_base, instr.in_size)
        arch_out = Region(out_base, instr.out_size)

        eff_in = self._map_input(arch_in)
        if self.active_spec is not None and arch_out.size > 0:
            eff_out = self._map_output(arch_out)
            if eff_out is None:
                return False
        else:
            if arch_out.size > 0:
                self._invalidate_committed(arch_out)
            eff_out = arch_out

        deps: set[int] = set()
        for region, writer in self.tracker.items():
            if region.overlaps(eff_in) or region.overlaps(eff_out):
                deps.add(writer)
        for rec in self.live.values():
            if rec.eff_in.overlaps(eff_out):
                deps.add(rec.seq)

        seq = len(self.records)
        rec = TaskRecord(
            seq=seq,
            program_index=self.pc,
            instr=instr,
            keyname=spec.keyname,
            latency=spec.latency,
            arch_in=arch_in,
            arch_out=arch_out,
            eff_in=eff_in,
            eff_out=eff_out,
            deps=deps,
            initial_deps=frozenset(deps),
            token=self.result_tokens.get(self.pc, 0),
            spec_id=self.active_spec.spec_id if self.active_spec else None,
            state=TaskState.WAITING if deps else TaskState.READY,
            dispatched=self.cycle,
        )
        self.records.append(rec)
        self.live[seq] = rec
        self.rs.append(rec)
        if rec.state is TaskState.READY:
            self._issue_work = True
        if eff_out.size > 0:
            self.tracker[eff_out] = seq
        self.pc += 1
        self._cycle_trace.setdefault("dispatched", []).append(seq)
        return True

    def _reg(self, index: int) -> int:
        if index >= self.cfg.gpr_count:
            raise ProgramError(f"pc {self.pc}: GPR index {index} out of range")
        return index

    # ---- TLB / transactional memory ---------------------------------------

    def _map_input(self, region: Region) -> Region:
        if region.size <= 0:
            return region
        for entry in reversed(self.tlb):
            if entry.orig.contains(region):
                offset = region.base - entry.orig.base
                return Region(entry.mapped.base + offset, region.size)
        return region

    def _map_block(self, block: int) -> int:
        for entry in reversed(self.tlb):
            if entry.orig.contains_block(block):
                return entry.mapped.base + (block - entry.orig.base)
        return block

    def _map_output(self, region: Region) -> Region | None:
        base = None
        if len(self.tlb) < self.cfg.tlb_entries:
            base = self._tm_alloc(region.size)
        if base is not None:
            mapped = Region(base, region.size)
            self.tlb.append(
                TlbEntry(orig=region, mapped=mapped, spec_id=self.active_spec.spec_id)
            )
            return mapped
        victim = self._evictable_entry()
        if victim is None:
            if region.size > self.cfg.tm_size:
                raise TmExhaustedUnderSpeculation(
                    f"region of {region.size} blocks can never fit in "
                    f"{self.cfg.tm_size} blocks of transactional memory"
                )
            if not self.tm_wait:
                self.tm_wait = True
                self.stats.tm_exhausted_events += 1
            return None
        self._evict(victim)
        return None

    def _evictable_entry(self) -> TlbEntry | None:
        for entry in self.tlb:
            if not entry.committed:
                continue
            if any(
                rec.eff_in.overlaps(entry.mapped) or rec.eff_out.overlaps(entry.mapped)
                for rec in self.live.values()
            ):
                continue
            br = self.pending_branch
            if br is not None and br.block is not None and entry.mapped.contains_block(br.block):
                continue
            return entry
        return None

    def _evict(self, entry: TlbEntry):
        self._copy_back(entry)
        self.tlb.remove(entry)
        self._tm_free(entry.mapped)
        charge = self.cfg.copy_cycles_per_block * entry.mapped.size
        self.stall_timer += charge
        self.stall_reason = "tlb_drain"
        self.stats.tlb_evictions += 1
        self.stats.evicted_blocks += entry.mapped.size
        self._cycle_trace.setdefault("evicted", []).append(
            [entry.orig.base, entry.mapped.base, entry.mapped.size]
        )

    def _copy_back(self, entry: TlbEntry):
        for offset in range(entry.mapped.size):
            src = entry.mapped.base + offset
            if src in self.memory:
                self.memory[entry.orig.base + offset] = self.memory[src]
                del self.memory[src]

    def _invalidate_committed(self, written: Region):
        # A fresh non-speculative write supersedes any committed mapping of
        # the same data; keep the values, drop the alias.
        for entry in [e for e in self.tlb if e.committed and e.orig.overlaps(written)]:
            self._copy_back(entry)
            self.tlb.remove(entry)
            self._tm_free(entry.mapped)

    def _tm_alloc(self, size: int) -> int | None:
        for i, (base, free) in enumerate(self.tm_free):
            if free >= size:
                if free == size:
                    del self.tm_free[i]
                else:
                    self.tm_free[i] = (base + size, free - size)
                return base
        return None

    def _tm_free(self, region: Region):
        intervals = self.tm_free + [(region.base, region.size)]
        intervals.sort()
        merged = [intervals[0]]
        for base, size in intervals[1:]:
            last_base, last_size = merged[-1]
            if last_base + last_size == base:
                merged[-1] = (last_base, last_size + size)
            else:
                merged.append((base, size))
        self.tm_free = merged

    def arch_memory(self) -> dict[int, int]:
        """Memory image as the program sees it: values parked in
        transactional memory read back through their committed mappings."""
        tm_lo = self.cfg.tm_base
        tm_hi = self.cfg.tm_base + self.cfg.tm_size
        image = {b: v for b, v in self.memory.items() if not tm_lo <= b < tm_hi}
        for entry in self.tlb:
            if not entry.committed:
                continue
            for offset in range(entry.mapped.size):
                src = entry.mapped.base + offset
                if src in self.memory:
                    image[entry.orig.base + offset] = self.memory[src]
        return image

    # ---- control instructions ---------------------------------------------

    def _exec_control(self, instr: Instruction) -> int:
        op = instr.opcode
        if op == OP_MOV:
            self.gpr[self._reg(instr.out_base)] = instr.in_base
            self.pc += 1
            return _ADVANCE
        if op in (OP_ADD, OP_MUL):
            a = self.gpr[self._reg(instr.in_base)]
            b = self.gpr[self._reg(instr.in_size)]
            value = a + b if op == OP_ADD else a * b
            self.gpr[self._reg(instr.out_base)] = value & GPR_MASK
            self.pc += 1
            return _ADVANCE
        if op == OP_JUMP:
            target = self.pc + _signed16(instr.in_base)
            if target < 0:
                raise ProgramError(f"pc {self.pc}: jump to negative address {target}")
            self.pc = target
            return _TRANSFER
        if op == OP_LBEG:
            count = instr.in_base if instr.in_size != 0 else self.gpr[self._reg(instr.in_base)]
            if count <= 0:
                self.pc = self._after_matching_lend(self.pc)
                return _TRANSFER
            self.loop_stack.append(
                LoopFrame(body_start=self.pc + 1, counter_reg=instr.in_base, remaining=count)
            )
            self.pc += 1
            return _ADVANCE
        if op == OP_LEND:
            if not self.loop_stack:
                raise LEndWithoutLBeg(f"pc {self.pc}: lend without an open loop")
            frame = self.loop_stack[-1]
            frame.remaining -= 1
            if frame.remaining > 0:
                self.pc = frame.body_start
                return _TRANSFER
            self.loop_stack.pop()
            self.pc += 1
            return _ADVANCE
        if op == OP_IF:
            return self._exec_if(instr)
        raise ProgramError(f"pc {self.pc}: unhandled opcode 0x{op:02x}")

    def _after_matching_lend(self, lbeg_pc: int) -> int:
        depth = 1
        pc = lbeg_pc + 1
        while pc < len(self.program):
            op = self.program[pc].opcode
            if op == OP_LBEG:
                depth += 1
            elif op == OP_LEND:
                depth -= 1
                if depth == 0:
                    return pc + 1
            pc += 1
        raise ProgramError(f"pc {lbeg_pc}: lbeg has no matching lend")

    def _exec_if(self, instr: Instruction) -> int:
        cls = branch_class(instr.control)
        threshold = self.gpr[self._reg(instr.in_size)]
        taken_pc = self.pc + instr.out_base
        not_taken_pc = self.pc + 1

        if cls == BRANCH_RR:
            taken = self.gpr[self._reg(instr.in_base)] > threshold
            self.pc = taken_pc if taken else not_taken_pc
            self.stall_timer += 1
            self.stall_reason = "bubble"
            self._cycle_trace.setdefault("branch", []).append(
                {"kind": "rr", "taken": taken}
            )
            return _TRANSFER

        if cls == BRANCH_BR:
            producer = self._find_producer(instr.in_base)
            if producer is None:
                raise MalformedBranch(
                    f"pc {self.pc}: no dispatched task with task_id 0x{instr.in_base:x}"
                )
            if producer.state is TaskState.DONE:
                taken = producer.token > threshold
                self.pc = taken_pc if taken else not_taken_pc
                self._cycle_trace.setdefault("branch", []).append(
                    {"kind": "br", "taken": taken, "resolved": "immediate"}
                )
                return _TRANSFER
            branch = PendingBranch(
                kind=BRANCH_BR,
                taken_pc=taken_pc,
                not_taken_pc=not_taken_pc,
                threshold=threshold,
                speculating=False,
                producer_seq=producer.seq,
            )
        elif cls == BRANCH_MR:
            block = self._map_block(instr.in_base)
            probe = Region(block, 1)
            deps = {seq for region, seq in self.tracker.items() if region.overlaps(probe)}
            branch = PendingBranch(
                kind=BRANCH_MR,
                taken_pc=taken_pc,
                not_taken_pc=not_taken_pc,
                threshold=threshold,
                speculating=False,
                block=block,
                deps=deps,
                resolve_at=None if deps else self.cycle + self.cfg.mem_read_latency + 1,
            )
        else:
            raise MalformedBranch(f"pc {self.pc}: branch class 3 is reserved")

        if self.active_spec is not None:
            # Depth-1 speculation: hold the nested branch until the outer
            # one resolves.
            self._blocked_reason = "branch_wait"
            return _BLOCKED

        self.pending_branch = branch
        self.pc = not_taken_pc
        if self.speculation_enabled:
            branch.speculating = True
            self.spec_counter += 1
            self.active_spec = Speculation(
                spec_id=self.spec_counter,
                branch=branch,
                gpr=list(self.gpr),
                loop_stack=[replace(f) for f in self.loop_stack],
                entered=self.cycle,
            )
            self.stats.spec_entered += 1
            self._cycle_trace.setdefault("spec", []).append(
                {"event": "enter", "id": self.spec_counter}
            )
        return _TRANSFER if not self.speculation_enabled else _ADVANCE

    def _find_producer(self, task_id: int) -> TaskRecord | None:
        for rec in reversed(self.records):
            if rec.state is TaskState.ABORTED:
                continue
            if rec.instr.task_id == task_id:
                return rec
        return None

    # ---- branch resolution -------------------------------------------------

    def _resolve_branch(self, taken: bool):
        branch = self.pending_branch
        self.pending_branch = None
        self.tm_wait = False
        if branch.speculating:
            spec = self.active_spec
            if taken:
                self._squash(spec, branch.taken_pc)
            else:
                self._commit(spec)
        else:
            self.pc = branch.taken_pc if taken else branch.not_taken_pc
        self.last_progress = self.cycle
        self._cycle_trace.setdefault("branch", []).append(
            {"kind": {BRANCH_MR: "mr", BRANCH_BR: "br"}[branch.kind], "taken": taken}
        )

    def _commit(self, spec: Speculation):
        for rec in self.records:
            if rec.spec_id == spec.spec_id:
                rec.spec_id = None
        for entry in self.tlb:
            if entry.spec_id == spec.spec_id:
                entry.spec_id = None
                entry.committed = True
        self.active_spec = None
        self.stats.spec_committed += 1
        self._cycle_trace.setdefault("spec", []).append(
            {"event": "commit", "id": spec.spec_id}
        )

    def _squash(self, spec: Speculation, taken_pc: int):
        aborted = 0
        for rec in self.records:
            if rec.spec_id != spec.spec_id:
                continue
            if rec.state is TaskState.RUNNING:
                self.pool.units[rec.unit_index].abort()
            if rec.state is not TaskState.DONE:
                aborted += 1
            rec.state = TaskState.ABORTED
            rec.aborted_cycle = self.cycle
            self.live.pop(rec.seq, None)
            for region in [r for r, seq in self.tracker.items() if seq == rec.seq]:
                del self.tracker[region]
        self.rs = [r for r in self.rs if r.state is not TaskState.ABORTED]
        self.cdb = deque(
            ev for ev in self.cdb if self.records[ev.task_seq].state is not TaskState.ABORTED
        )
        for entry in [e for e in self.tlb if e.spec_id == spec.spec_id]:
            for offset in range(entry.mapped.size):
                self.memory.pop(entry.mapped.base + offset, None)
            self.tlb.remove(entry)
            self._tm_free(entry.mapped)
        self.gpr = spec.gpr
        self.loop_stack = spec.loop_stack
        self.pc = taken_pc
        self.active_spec = None
        self.stats.spec_squashed += 1
        self._cycle_trace.setdefault("spec", []).append(
            {"event": "squash", "id": spec.spec_id, "aborted": aborted}
        )

    # ---- run loop ----------------------------------------------------------

    def done(self) -> bool:
        return (
            self.pc >= len(self.program)
            and self.pending_branch is None
            and self.active_spec is None
            and not self.rs
            and not self.live
            and not self.cdb
        )

    def run(self) -> SimStats:
        while not self.done():
            self.step()
            if self.cycle - self.last_progress > self.cfg.deadlock_horizon:
                raise DeadlockDetected(
                    f"no forward progress for {self.cfg.deadlock_horizon} cycles "
                    f"(cycle {self.cycle}, pc {self.pc})"
                )
            if self.trace is None and self.last_progress < self.cycle:
                self._skip_quiet_cycles()
        return self._finalize()

    def _skip_quiet_cycles(self):
        # A cycle with no progress repeats identically until the next
        # scheduled event, so the clock can jump there, carrying the
        # per-cycle stall and busy tallies along.  Only sound while the
        # dispatcher is pinned: a cycle that merely failed to dispatch
        # (e.g. the one that just raised tm_wait) may act differently
        # next cycle, so it must be stepped.
        if (
            self.stall_timer == 0
            and not self._blocked_reason
            and self.pc < len(self.program)
        ):
            return
        targets = [self.last_progress + self.cfg.deadlock_horizon + 1]
        if self.stall_timer > 0:
            targets.append(self.cycle + self.stall_timer + 1)
        br = self.pending_branch
        if br is not None and br.resolve_at is not None:
            targets.append(br.resolve_at)
        if self.cdb:
            targets.append(self.cdb[0].cycle + self.broadcast_delay)
        for unit in self.pool.active_units():
            if unit.state is UnitState.RUNNING:
                targets.append(self.cycle + unit.remaining)
        skipped = min(targets) - 1 - self.cycle
        if skipped <= 0:
            return
        self.cycle += skipped
        for unit in self.pool.active_units():
            unit.busy_cycles += skipped
            if unit.state is UnitState.RUNNING:
                unit.remaining -= skipped
        if self.stall_timer > 0:
            self.stats.stalls[self.stall_reason] = (
                self.stats.stalls.get(self.stall_reason, 0) + skipped
            )
            self.stall_timer -= skipped
        elif self._blocked_reason:
            self.stats.stalls[self._blocked_reason] = (
                self.stats.stalls.get(self._blocked_reason, 0) + skipped
            )

    def _finalize(self) -> SimStats:
        stats = self.stats
        stats.total_cycles = self.cycle
        done = [r for r in self.records if r.state is TaskState.DONE]
        aborted = [r for r in self.records if r.state is TaskState.ABORTED]
        stats.tasks_dispatched = len(self.records)
        stats.tasks_completed = len(done)
        stats.tasks_aborted = len(aborted)
        stats.makespan = max(
            [r.finished for r in done if r.finished is not None] + [self.last_activity],
            default=0,
        )
        for unit in self.pool.units:
            stats.busy_cycles[unit.spec.keyname] = (
                stats.busy_cycles.get(unit.spec.keyname, 0) + unit.busy_cycles
            )
        if stats.makespan > 0:
            for spec in self.catalog.functions:
                busy = stats.busy_cycles.get(spec.keyname, 0)
                capacity = self.catalog.count(spec.keyname) * stats.makespan
                stats.utilization[spec.keyname] = busy / capacity
        self._assert_busy_identity(done, aborted)
        return stats

    def _assert_busy_identity(self, done: list[TaskRecord], aborted: list[TaskRecord]):
        total_busy = sum(unit.busy_cycles for unit in self.pool.units)
        completed_share = sum(r.latency + (r.completed - r.finished) for r in done)
        # An aborted task holds its unit from issue to the squash, unless its
        # broadcast already released the unit.
        aborted_share = sum(
            (r.completed if r.completed is not None else r.aborted_cycle) - r.issued
            for r in aborted
            if r.issued is not None
        )
        assert total_busy == completed_share + aborted_share, (
            f"busy-cycle accounting drifted: {total_busy} != "
            f"{completed_share} + {aborted_share}"
        )
