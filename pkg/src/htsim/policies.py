"""Scheduling policies compared by the simulator.

Four ways to run the same program:

* ``naive``: the CPU schedules one task at a time and blocks on each, so
  every task costs its full latency plus one interrupt; scalar
  instructions cost one cycle each.
* ``software``: the out-of-order engine, but every task dispatch pays the
  software scheduler's cache traffic and every completion is announced by
  interrupt before dependents may clear.  No speculation.
* ``hts``: the hardware scheduler with speculation disabled; dispatch
  stalls at unresolved branches.
* ``hts-spec``: the full hardware scheduler with branch speculation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .accel import AcceleratorCatalog
from .config import SimConfig
from .core import (
    BLOCK_MASK,
    GPR_MASK,
    DeadlockDetected,
    LEndWithoutLBeg,
    MalformedBranch,
    ProgramError,
    Scheduler,
    SimStats,
    UnknownAcceleratorId,
    normalize_values,
    _signed16,
)
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
    Program,
    branch_class,
)

_NAIVE_STEP_LIMIT = 10_000_000


class Policy(Enum):
    NAIVE = "naive"
    SOFTWARE = "software"
    HTS = "hts"
    HTS_SPEC = "hts-spec"

    @classmethod
    def from_name(cls, name: str) -> Policy:
        for policy in cls:
            if policy.value == name:
                return policy
        raise ValueError(
            f"unknown policy {name!r}; choose from "
            + ", ".join(p.value for p in cls)
        )


@dataclass(frozen=True)
class CostModel:
    interrupt_latency: int = 300
    l2_hit_latency: int = 25
    sw_accesses_per_task: int = 4

    @classmethod
    def from_config(cls, config: SimConfig) -> CostModel:
        return cls(
            interrupt_latency=config.interrupt_latency,
            l2_hit_latency=config.l2_hit_latency,
            sw_accesses_per_task=config.sw_accesses_per_task,
        )

    @property
    def sw_dispatch_overhead(self) -> int:
        return self.sw_accesses_per_task * self.l2_hit_latency


def run_naive(
    program: Program,
    catalog: AcceleratorCatalog,
    cost: CostModel | None = None,
    values: dict | None = None,
) -> SimStats:
    """Strictly in-order reference: block on every task, pay an interrupt each."""
    cost = cost or CostModel()
    preload, tokens = normalize_values(values)
    memory = dict(preload)
    gpr = [0] * 16
    loop_stack: list[tuple[int, int]] = []  # (body_start, remaining)
    executed: list[tuple[int, int]] = []  # (program_index, task_id)
    stats = SimStats(policy=Policy.NAIVE.value)
    cycles = 0
    steps = 0
    pc = 0

    def reg(index: int) -> int:
        if index >= len(gpr):
            raise ProgramError(f"pc {pc}: GPR index {index} out of range")
        return index

    def after_matching_lend(lbeg_pc: int) -> int:
        depth = 1
        scan = lbeg_pc + 1
        while scan < len(program):
            op = program[scan].opcode
            if op == OP_LBEG:
                depth += 1
            elif op == OP_LEND:
                depth -= 1
                if depth == 0:
                    return scan + 1
            scan += 1
        raise ProgramError(f"pc {lbeg_pc}: lbeg has no matching lend")

    while 0 <= pc < len(program):
        steps += 1
        if steps > _NAIVE_STEP_LIMIT:
            raise DeadlockDetected(f"naive execution exceeded {_NAIVE_STEP_LIMIT} steps")
        instr = program[pc]
        if instr.is_task:
            spec = catalog.by_id(instr.opcode)
            if spec is None:
                raise UnknownAcceleratorId(
                    f"pc {pc}: no accelerator with ID 0x{instr.opcode:02x}"
                )
            if instr.control & CTRL_INDIRECT:
                out_base = gpr[reg(instr.out_base)] & BLOCK_MASK
            else:
                out_base = instr.out_base
            cycles += spec.latency + cost.interrupt_latency
            if instr.out_size > 0:
                memory[out_base] = tokens.get(pc, 0)
            executed.append((pc, instr.task_id))
            stats.busy_cycles[spec.keyname] = (
                stats.busy_cycles.get(spec.keyname, 0) + spec.latency
            )
            stats.tasks_dispatched += 1
            stats.tasks_completed += 1
            pc += 1
            continue

        cycles += 1
        stats.scalar_ops += 1
        op = instr.opcode
        if op == OP_MOV:
            gpr[reg(instr.out_base)] = instr.in_base
            pc += 1
        elif op in (OP_ADD, OP_MUL):
            a = gpr[reg(instr.in_base)]
            b = gpr[reg(instr.in_size)]
            gpr[reg(instr.out_base)] = (a + b if op == OP_ADD else a * b) & GPR_MASK
            pc += 1
        elif op == OP_JUMP:
            target = pc + _signed16(instr.in_base)
            if target < 0:
                raise ProgramError(f"pc {pc}: jump to negative address {target}")
            pc = target
        elif op == OP_LBEG:
            count = instr.in_base if instr.in_size != 0 else gpr[reg(instr.in_base)]
            if count <= 0:
                pc = after_matching_lend(pc)
            else:
                loop_stack.append((pc + 1, count))
                pc += 1
        elif op == OP_LEND:
            if not loop_stack:
                raise LEndWithoutLBeg(f"pc {pc}: lend without an open loop")
            body_start, remaining = loop_stack[-1]
            remaining -= 1
            if remaining > 0:
                loop_stack[-1] = (body_start, remaining)
                pc = body_start
            else:
                loop_stack.pop()
                pc += 1
        elif op == OP_IF:
            cls = branch_class(instr.control)
            threshold = gpr[reg(instr.in_size)]
            if cls == BRANCH_RR:
                value = gpr[reg(instr.in_base)]
            elif cls == BRANCH_MR:
                value = memory.get(instr.in_base, 0)
            elif cls == BRANCH_BR:
                matches = [idx for idx, tid in executed if tid == instr.in_base]
                if not matches:
                    raise MalformedBranch(
                        f"pc {pc}: no executed task with task_id 0x{instr.in_base:x}"
                    )
                value = tokens.get(matches[-1], 0)
            else:
                raise MalformedBranch(f"pc {pc}: branch class 3 is reserved")
            pc = pc + instr.out_base if value > threshold else pc + 1
        else:
            raise ProgramError(f"pc {pc}: unhandled opcode 0x{op:02x}")

    stats.makespan = cycles
    stats.total_cycles = cycles
    if cycles > 0:
        for spec in catalog.functions:
            busy = stats.busy_cycles.get(spec.keyname, 0)
            capacity = catalog.count(spec.keyname) * cycles
            stats.utilization[spec.keyname] = busy / capacity
    return stats


def run_software(
    program: Program,
    catalog: AcceleratorCatalog,
    cost: CostModel | None = None,
    config: SimConfig | None = None,
    values: dict | None = None,
    trace_sink: list | None = None,
) -> SimStats:
    cost = cost or CostModel()
    engine = Scheduler(
        program,
        catalog,
        config,
        speculation=False,
        values=values,
        dispatch_overhead=cost.sw_dispatch_overhead,
        broadcast_delay=cost.interrupt_latency,
        trace=trace_sink is not None,
    )
    stats = engine.run()
    stats.policy = Policy.SOFTWARE.value
    if trace_sink is not None:
        trace_sink.extend(engine.trace)
    return stats


def run_hts(
    program: Program,
    catalog: AcceleratorCatalog,
    config: SimConfig | None = None,
    speculation: bool = True,
    values: dict | None = None,
    trace_sink: list | None = None,
) -> SimStats:
    engine = Scheduler(
        program,
        catalog,
        config,
        speculation=speculation,
        values=values,
        trace=trace_sink is not None,
    )
    stats = engine.run()
    stats.policy = (Policy.HTS_SPEC if speculation else Policy.HTS).value
    if trace_sink is not None:
        trace_sink.extend(engine.trace)
    return stats


def run_policy(
    policy: Policy,
    program: Program,
    catalog: AcceleratorCatalog,
    cost: CostModel | None = None,
    config: SimConfig | None = None,
    values: dict | None = None,
    trace_sink: list | None = None,
) -> SimStats:
    if policy is Policy.NAIVE:
        return run_naive(program, catalog, cost, values=values)
    if policy is Policy.SOFTWARE:
        return run_software(program, catalog, cost, config, values=values, trace_sink=trace_sink)
    return run_hts(
        program,
        catalog,
        config,
        speculation=policy is Policy.HTS_SPEC,
        values=values,
        trace_sink=trace_sink,
    )
