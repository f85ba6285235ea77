"""Synthetic benchmark generators and the audio compression application.

Each generator is a pure function of its spec: it returns canonical
assembly text plus a values blob (memory preload and per-instruction
result tokens) that scripts branch outcomes.  Regions come from a bump
allocator over the block space, sized by each function's dataframe
divided by the 8-byte block granule.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum

from .accel import AcceleratorCatalog, FunctionSpec, default_catalog
from .isa import (
    BRANCH_BR,
    BRANCH_MR,
    CTRL_INDIRECT,
    OP_ADD,
    OP_IF,
    OP_JUMP,
    OP_LBEG,
    OP_LEND,
    OP_MOV,
    Instruction,
    Program,
    disassemble,
)


class InvalidSpec(ValueError):
    pass


class BenchmarkKind(Enum):
    NO_DEP = "no-dep"
    SAME_DEP = "same-dep"
    DIFF_DEP = "diff-dep"
    RANDOM_DEP = "random-dep"
    LOOP_NO_DEP = "loop-no-dep"
    LOOP_DEP = "loop-dep"
    BRANCH_TAKEN_NO_DEP = "branch-taken-no-dep"
    BRANCH_NOT_TAKEN_NO_DEP = "branch-not-taken-no-dep"
    BRANCH_TAKEN_DEP = "branch-taken-dep"

    @classmethod
    def from_name(cls, name: str) -> BenchmarkKind:
        for kind in cls:
            if kind.value == name:
                return kind
        raise InvalidSpec(
            f"unknown benchmark {name!r}; choose from "
            + ", ".join(k.value for k in cls)
        )


@dataclass(frozen=True)
class BenchmarkSpec:
    kind: BenchmarkKind
    n_tasks: int = 30
    seed: int = 0
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AudioSpec:
    bands: int = 4
    time_domain: bool = False
    seed: int = 0


# Function rotation used by the independent-task blocks; the first five
# match the order of the five-task worked example.
_ROTATION = (
    "real_fir",
    "complex_fir",
    "adaptive_fir",
    "vector_dot",
    "iir",
    "vector_add",
    "vector_max",
    "fft_256",
    "dct_64",
    "correlation",
)

_BRANCH_THRESHOLD = 5


class _Alloc:
    """Bump allocator over the 16-bit block space, below the TM window."""

    def __init__(self, limit: int = 0xFF00):
        self.cursor = 0
        self.limit = limit

    def take(self, blocks: int) -> int:
        base = self.cursor
        self.cursor += blocks
        if self.cursor > self.limit:
            raise InvalidSpec(
                f"program needs {self.cursor} blocks, only {self.limit} available"
            )
        return base


def _task(
    fn: FunctionSpec,
    in_base: int,
    in_size: int,
    out_base: int,
    out_size: int,
    task_id: int,
    control: int = 0,
) -> Instruction:
    return Instruction(
        opcode=fn.accel_id,
        in_base=in_base,
        in_size=in_size,
        out_base=out_base,
        out_size=out_size,
        task_id=task_id,
        control=control,
    )


def _mov(reg: int, value: int) -> Instruction:
    return Instruction(opcode=OP_MOV, in_base=value, out_base=reg)


def _add(dst: int, a: int, b: int) -> Instruction:
    return Instruction(opcode=OP_ADD, in_base=a, in_size=b, out_base=dst)


def _lbeg(count: int) -> Instruction:
    return Instruction(opcode=OP_LBEG, in_base=count, in_size=1)


def _lend() -> Instruction:
    return Instruction(opcode=OP_LEND)


def _rotation(catalog: AcceleratorCatalog) -> list[FunctionSpec]:
    return [catalog.lookup(name) for name in _ROTATION if catalog.lookup(name)]


def _check(spec: BenchmarkSpec):
    if spec.n_tasks < 1:
        raise InvalidSpec(f"n_tasks must be >= 1, got {spec.n_tasks}")


def _independent_block(
    fns: list[FunctionSpec], count: int, alloc: _Alloc, first_task_id: int = 0
) -> list[Instruction]:
    block = []
    for i in range(count):
        fn = fns[i % len(fns)]
        blocks = fn.region_blocks
        block.append(
            _task(
                fn,
                alloc.take(blocks),
                blocks,
                alloc.take(blocks),
                blocks,
                (first_task_id + i) & 0xF,
            )
        )
    return block


def _gen_no_dep(spec: BenchmarkSpec, catalog: AcceleratorCatalog) -> tuple[Program, dict]:
    alloc = _Alloc()
    return _independent_block(_rotation(catalog), spec.n_tasks, alloc), {}


def _gen_chain(
    spec: BenchmarkSpec, catalog: AcceleratorCatalog, same_function: bool
) -> tuple[Program, dict]:
    alloc = _Alloc()
    if same_function:
        name = spec.extra.get("function", "fft_256")
        fn = catalog.lookup(name)
        if fn is None:
            raise InvalidSpec(f"unknown function {name!r}")
        fns = [fn]
    else:
        fns = _rotation(catalog)
    program: Program = []
    prev_out: tuple[int, int] | None = None
    for i in range(spec.n_tasks):
        fn = fns[i % len(fns)]
        blocks = fn.region_blocks
        if prev_out is None:
            in_base, in_size = alloc.take(blocks), blocks
        else:
            in_base, in_size = prev_out
        out_base = alloc.take(blocks)
        program.append(_task(fn, in_base, in_size, out_base, blocks, i & 0xF))
        prev_out = (out_base, blocks)
    return program, {}


def _gen_random_dep(spec: BenchmarkSpec, catalog: AcceleratorCatalog) -> tuple[Program, dict]:
    rng = random.Random(spec.seed)
    alloc = _Alloc()
    fns = _rotation(catalog)
    program: Program = []
    outs: list[tuple[int, int]] = []
    for i in range(spec.n_tasks):
        fn = rng.choice(fns)
        blocks = fn.region_blocks
        n_parents = min(i, rng.randint(0, 2))
        parents = sorted(rng.sample(range(i), n_parents))
        if n_parents >= 1:
            in_base, in_size = outs[parents[0]]
        else:
            in_base, in_size = alloc.take(blocks), blocks
        if n_parents == 2:
            out_base, out_size = outs[parents[1]]
        else:
            out_base, out_size = alloc.take(blocks), blocks
        program.append(_task(fn, in_base, in_size, out_base, out_size, i & 0xF))
        outs.append((out_base, out_size))
    return program, {}


def _gen_loop(
    spec: BenchmarkSpec, catalog: AcceleratorCatalog, carried_input: bool
) -> tuple[Program, dict]:
    name = spec.extra.get("function", "iir")
    fn = catalog.lookup(name)
    if fn is None:
        raise InvalidSpec(f"unknown function {name!r}")
    blocks = fn.region_blocks
    iterations = spec.n_tasks
    alloc = _Alloc()
    program: Program = []
    if carried_input:
        # One outside producer; every iteration reads its output region.
        producer = catalog.lookup("real_fir")
        src = alloc.take(producer.region_blocks)
        shared = alloc.take(producer.region_blocks)
        program.append(
            _task(producer, src, producer.region_blocks, shared, producer.region_blocks, 1)
        )
        in_arena = shared
        in_stride = 0
        in_size = producer.region_blocks
    else:
        in_arena = alloc.take(iterations * blocks)
        in_stride = blocks
        in_size = blocks
    out_arena = alloc.take(iterations * blocks)
    program += [
        _mov(1, in_arena),
        _mov(2, out_arena),
        _mov(3, blocks),
        _lbeg(iterations),
        _task(fn, 1, in_size, 2, blocks, 2, control=CTRL_INDIRECT),
        _add(2, 2, 3),
    ]
    if in_stride:
        program.insert(len(program) - 1, _add(1, 1, 3))
    program.append(_lend())
    return program, {}


def _gen_branch(
    spec: BenchmarkSpec, catalog: AcceleratorCatalog, taken: bool, resolved_by_task: bool
) -> tuple[Program, dict]:
    alloc = _Alloc()
    fns = _rotation(catalog)
    side = max(1, spec.n_tasks // 2)
    values: dict = {"preload": {}, "result_tokens": {}}
    program: Program = []

    if resolved_by_task:
        producer = catalog.lookup("real_fir")
        blocks = producer.region_blocks
        program.append(_task(producer, alloc.take(blocks), blocks, alloc.take(blocks), blocks, 1))
        values["result_tokens"][0] = _BRANCH_THRESHOLD + 1 if taken else _BRANCH_THRESHOLD
        source = 1  # names the producer's task_id
        branch_ctrl = BRANCH_BR << 1
    else:
        flag_block = alloc.take(1)
        values["preload"][flag_block] = _BRANCH_THRESHOLD + 1 if taken else _BRANCH_THRESHOLD
        source = flag_block
        branch_ctrl = BRANCH_MR << 1

    program.append(_mov(1, _BRANCH_THRESHOLD))
    if_pc = len(program)
    # Offsets: not-taken block right after the if, a jump over the taken
    # block, then the taken block.
    taken_offset = side + 2
    program.append(
        Instruction(
            opcode=OP_IF,
            in_base=source,
            in_size=1,
            out_base=taken_offset,
            task_id=2,
            control=branch_ctrl,
        )
    )
    program += _independent_block(fns, side, alloc, first_task_id=3)
    program.append(Instruction(opcode=OP_JUMP, in_base=side + 1))
    program += _independent_block(fns, side, alloc, first_task_id=3)
    assert if_pc + taken_offset == len(program) - side
    return program, values


_GENERATORS = {
    BenchmarkKind.NO_DEP: _gen_no_dep,
    BenchmarkKind.SAME_DEP: lambda s, c: _gen_chain(s, c, same_function=True),
    BenchmarkKind.DIFF_DEP: lambda s, c: _gen_chain(s, c, same_function=False),
    BenchmarkKind.RANDOM_DEP: _gen_random_dep,
    BenchmarkKind.LOOP_NO_DEP: lambda s, c: _gen_loop(s, c, carried_input=False),
    BenchmarkKind.LOOP_DEP: lambda s, c: _gen_loop(s, c, carried_input=True),
    BenchmarkKind.BRANCH_TAKEN_NO_DEP: lambda s, c: _gen_branch(
        s, c, taken=True, resolved_by_task=False
    ),
    BenchmarkKind.BRANCH_NOT_TAKEN_NO_DEP: lambda s, c: _gen_branch(
        s, c, taken=False, resolved_by_task=False
    ),
    BenchmarkKind.BRANCH_TAKEN_DEP: lambda s, c: _gen_branch(
        s, c, taken=True, resolved_by_task=True
    ),
}


def generate_program(
    spec: BenchmarkSpec, catalog: AcceleratorCatalog | None = None
) -> tuple[Program, dict]:
    """Instruction list plus values blob for one synthetic benchmark."""
    catalog = catalog or default_catalog()
    _check(spec)
    return _GENERATORS[spec.kind](spec, catalog)


def generate(
    spec: BenchmarkSpec, catalog: AcceleratorCatalog | None = None
) -> tuple[str, dict]:
    """Canonical assembly text plus values blob for one synthetic benchmark."""
    catalog = catalog or default_catalog()
    program, values = generate_program(spec, catalog)
    return disassemble(program, catalog.keymap()), values


def generate_audio_program(
    spec: AudioSpec, catalog: AcceleratorCatalog | None = None
) -> tuple[Program, dict]:
    """Audio compression app: correlate, then branch to a time-domain FIR
    cascade or a frequency-domain FFT/dot-product pipeline over ``bands``."""
    catalog = catalog or default_catalog()
    if spec.bands < 1:
        raise InvalidSpec(f"bands must be >= 1, got {spec.bands}")
    corr = catalog.lookup("correlation")
    fft = catalog.lookup("fft_256")
    vdot = catalog.lookup("vector_dot")
    fir = catalog.lookup("real_fir")
    for fn in (corr, fft, vdot, fir):
        if fn is None:
            raise InvalidSpec("catalog is missing a function the audio app needs")

    alloc = _Alloc()
    fft_blocks = fft.region_blocks
    small = vdot.region_blocks
    threshold = 10

    audio_in = alloc.take(spec.bands * fft_blocks)
    corr_out = alloc.take(corr.region_blocks)
    freq_arenas = [alloc.take(spec.bands * fft_blocks) for _ in range(5)]
    fir_arenas = [alloc.take(spec.bands * fir.region_blocks) for _ in range(3)]

    values: dict = {
        "preload": {},
        "result_tokens": {1: threshold + 1 if spec.time_domain else threshold},
    }

    program: Program = [
        _mov(8, threshold),
        _task(corr, audio_in, corr.region_blocks, corr_out, corr.region_blocks, 1),
    ]
    if_pc = len(program)

    freq_block: Program = [
        _mov(1, audio_in),
        _mov(2, freq_arenas[0]),
        _mov(3, freq_arenas[1]),
        _mov(4, freq_arenas[2]),
        _mov(5, freq_arenas[3]),
        _mov(6, freq_arenas[4]),
        _mov(7, fft_blocks),
        _lbeg(spec.bands),
        _task(fft, 1, fft_blocks, 2, fft_blocks, 2, control=CTRL_INDIRECT),
        _task(vdot, 2, small, 3, small, 3, control=CTRL_INDIRECT),
        _task(vdot, 3, small, 4, small, 4, control=CTRL_INDIRECT),
        _task(vdot, 4, small, 5, small, 5, control=CTRL_INDIRECT),
        _task(fft, 5, small, 6, fft_blocks, 6, control=CTRL_INDIRECT),
        _add(1, 1, 7),
        _add(2, 2, 7),
        _add(3, 3, 7),
        _add(4, 4, 7),
        _add(5, 5, 7),
        _add(6, 6, 7),
        _lend(),
    ]
    time_block: Program = [
        _mov(1, audio_in),
        _mov(2, fir_arenas[0]),
        _mov(3, fir_arenas[1]),
        _mov(4, fir_arenas[2]),
        _mov(7, fir.region_blocks),
        _lbeg(spec.bands),
        _task(fir, 1, fir.region_blocks, 2, fir.region_blocks, 2, control=CTRL_INDIRECT),
        _task(fir, 2, fir.region_blocks, 3, fir.region_blocks, 3, control=CTRL_INDIRECT),
        _task(fir, 3, fir.region_blocks, 4, fir.region_blocks, 4, control=CTRL_INDIRECT),
        _add(1, 1, 7),
        _add(2, 2, 7),
        _add(3, 3, 7),
        _add(4, 4, 7),
        _lend(),
    ]

    taken_offset = 1 + len(freq_block) + 1  # past the if, freq block and jump
    program.append(
        Instruction(
            opcode=OP_IF,
            in_base=corr_out,
            in_size=8,
            out_base=taken_offset,
            task_id=2,
            control=BRANCH_MR << 1,
        )
    )
    program += freq_block
    program.append(Instruction(opcode=OP_JUMP, in_base=len(time_block) + 1))
    assert if_pc + taken_offset == len(program)
    program += time_block
    return program, values


def generate_audio(
    spec: AudioSpec, catalog: AcceleratorCatalog | None = None
) -> tuple[str, dict]:
    catalog = catalog or default_catalog()
    program, values = generate_audio_program(spec, catalog)
    return disassemble(program, catalog.keymap()), values
