"""Acceptance gate: one test per release criterion, stated tolerances only.

Run with -v for the one-line-per-criterion view; each test also prints
its measured numbers.
"""

import csv
import json
import random
import time
from pathlib import Path

import pytest

from htsim import cli
from htsim.accel import BLOCK_BYTES, default_catalog
from htsim.config import SimConfig
from htsim.core import Scheduler, TaskState
from htsim.isa import assemble, decode, encode
from htsim.policies import Policy, run_policy
from htsim.workloads import (
    AudioSpec,
    BenchmarkKind,
    BenchmarkSpec,
    generate_audio_program,
    generate_program,
)

from oracles import inorder_execute
from test_isa import LAYOUT_ORACLE, random_instruction

CATALOG = default_catalog()
KEYMAP = CATALOG.keymap()

FIVE_TASKS = (
    "real_fir 10 2 13 2 0 0 0 0000\n"
    "complex_fir 16 2 19 2 1 0 0 0000\n"
    "adaptive_fir 23 3 28 3 2 0 0 0000\n"
    "vector_dot 40 4 48 4 3 0 0 0000\n"
    "iir 32 3 36 3 4 0 0 0000"
)


def test_criterion_1_isa_round_trip_and_layout():
    start = time.perf_counter()
    rng = random.Random(2024)
    for _ in range(10_000):
        instr = random_instruction(rng)
        word = encode(instr)
        assert decode(word) == instr
        for name, lsb, width in LAYOUT_ORACLE:
            assert (word >> lsb) & ((1 << width) - 1) == getattr(instr, name)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    print(f"criterion 1 PASS: 10000 round-trips + field masks in {elapsed:.2f}s")


def test_criterion_2_latency_table_exact():
    expected = {
        "real_fir": (921, 40),
        "complex_fir": (3696, 40),
        "adaptive_fir": (4384, 40),
        "iir": (2450, 40),
        "vector_dot": (53, 40),
        "vector_add": (131, 40),
        "vector_max": (55, 40),
        "fft_256": (18673, 256),
        "dct_64": (874, 64),
        "correlation": (753, 40),
    }
    actual = {f.keyname: (f.latency, f.dataframe_bytes) for f in CATALOG.functions}
    assert actual == expected
    assert all(
        f.region_blocks == f.dataframe_bytes // BLOCK_BYTES for f in CATALOG.functions
    )
    print("criterion 2 PASS: all ten latency/dataframe pairs exact")


def test_criterion_3_naive_five_task_makespan():
    program = assemble(FIVE_TASKS, KEYMAP)
    stats = run_policy(Policy.NAIVE, program, CATALOG)
    assert stats.makespan == 13004  # tolerance 0
    print(f"criterion 3 PASS: naive five-task makespan {stats.makespan} == 13004")


def test_criterion_4_random_dep_vs_inorder_oracle():
    start = time.perf_counter()
    for seed in range(200):
        n = 16 + (seed * 7) % 49  # spread over 16..64
        program, values = generate_program(
            BenchmarkSpec(kind=BenchmarkKind.RANDOM_DEP, n_tasks=n, seed=seed), CATALOG
        )
        sched = Scheduler(program, CATALOG, values=values, speculation=False)
        sched.run()
        oracle = inorder_execute(program, CATALOG, values)
        done = [r for r in sched.records if r.state is TaskState.DONE]
        assert sorted(r.program_index for r in done) == sorted(
            e[0] for e in oracle.executed
        ), f"seed {seed}: executed sets differ"
        for rec in done:
            for dep in rec.initial_deps:
                parent = sched.records[dep]
                if parent.state is TaskState.DONE:
                    assert rec.issued >= parent.completed, (
                        f"seed {seed}: task {rec.seq} issued before dep {dep} broadcast"
                    )
        mem = sched.arch_memory()
        for block, value in oracle.memory.items():
            assert mem.get(block) == value, f"seed {seed}: block 0x{block:x}"
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    print(f"criterion 4 PASS: 200 seeds, orderings + final regions, {elapsed:.2f}s")


def test_criterion_5_policy_ordering_across_benchmarks():
    strict = {
        BenchmarkKind.NO_DEP,
        BenchmarkKind.DIFF_DEP,
        BenchmarkKind.RANDOM_DEP,
    }
    catalog = CATALOG.uniform_instances(2)
    lines = []
    for kind in BenchmarkKind:
        program, values = generate_program(
            BenchmarkSpec(kind=kind, n_tasks=12, seed=0), CATALOG
        )
        naive = run_policy(Policy.NAIVE, program, catalog, values=values).makespan
        software = run_policy(Policy.SOFTWARE, program, catalog, values=values).makespan
        hts = run_policy(Policy.HTS, program, catalog, values=values).makespan
        assert naive >= software >= hts, kind.value
        if kind in strict:
            assert naive > software > hts, kind.value
        lines.append(f"{kind.value}: {naive}/{software}/{hts}")
    print("criterion 5 PASS: naive >= software >= hts on all nine; "
          "strict where required (" + "; ".join(lines) + ")")


def test_criterion_6_speculation_bounds():
    cfg = SimConfig()

    def both_modes(kind):
        program, values = generate_program(
            BenchmarkSpec(kind=kind, n_tasks=12, seed=0), CATALOG
        )
        plain = Scheduler(program, CATALOG, values=values, speculation=False)
        spec = Scheduler(program, CATALOG, values=values, speculation=True)
        return (plain, plain.run()), (spec, spec.run())

    (_, plain), (_, spec) = both_modes(BenchmarkKind.BRANCH_NOT_TAKEN_NO_DEP)
    saving = plain.makespan - spec.makespan
    assert saving >= cfg.mem_read_latency
    details = [f"not-taken saving {saving} >= {cfg.mem_read_latency}"]

    bound = cfg.dispatch_width * 4
    for kind in (BenchmarkKind.BRANCH_TAKEN_NO_DEP, BenchmarkKind.BRANCH_TAKEN_DEP):
        (p_sched, plain), (s_sched, spec) = both_modes(kind)
        overhead = spec.makespan - plain.makespan
        assert 0 <= overhead <= bound, kind.value
        assert s_sched.arch_memory() == p_sched.arch_memory(), kind.value
        assert s_sched.gpr == p_sched.gpr, kind.value
        details.append(f"{kind.value} overhead {overhead} <= {bound}, state identical")
    print("criterion 6 PASS: " + "; ".join(details))


def test_criterion_7_audio_scaling():
    makespans = {}
    for bands in (2, 4, 8):
        program, values = generate_audio_program(AudioSpec(bands=bands), CATALOG)
        for fus in (1, 2, 4, 8):
            catalog = CATALOG.uniform_instances(fus)
            stats = Scheduler(program, catalog, values=values).run()
            makespans[bands, fus] = stats.makespan
    for bands in (2, 4, 8):
        series = [makespans[bands, f] for f in (1, 2, 4, 8)]
        assert series == sorted(series, reverse=True), f"bands={bands}: {series}"
    improvements = [
        (makespans[b, 1] - makespans[b, 8]) / makespans[b, 1] for b in (2, 4, 8)
    ]
    assert improvements[0] < improvements[1] < improvements[2], improvements
    print(
        "criterion 7 PASS: makespan non-increasing in FUs; relative improvement "
        "at 8 FUs grows with bands "
        + ", ".join(f"{b}:{i:.3f}" for b, i in zip((2, 4, 8), improvements))
    )


def test_criterion_8_deterministic_outputs(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("HTSIM_THREADS", "2")
    cli.main(["gen", "random-dep", "--tasks", "10", "--seed", "3", "-o", "p.asm"])
    for tag in ("a", "b"):
        rc = cli.main(
            ["run", "p.asm", "--deterministic",
             "--json", f"{tag}.json", "--csv", f"{tag}.csv"]
        )
        assert rc == 0
    assert Path("a.json").read_bytes() == Path("b.json").read_bytes()
    assert Path("a.csv").read_bytes() == Path("b.csv").read_bytes()
    sweep_args = [
        "sweep", "--benchmarks", "no-dep,branch-taken-dep", "--fus", "1,2",
        "--tasks", "6", "--deterministic",
    ]
    cli.main(sweep_args + ["--csv", "s1.csv"])
    cli.main(sweep_args + ["--csv", "s2.csv"])
    assert Path("s1.csv").read_bytes() == Path("s2.csv").read_bytes()
    with open("s1.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 4 * 2
    assert "generated_at" not in json.loads(Path("a.json").read_text())
    print("criterion 8 PASS: deterministic JSON/CSV byte-identical across reruns")


def test_criterion_9_tlb_pressure():
    cfg = SimConfig(tlb_entries=2, copy_cycles_per_block=4)
    lines = ["mov 5 0 1 0 0 0 0 0"]
    preload = {}
    tokens = {}
    for i in range(4):
        flag = 0x40 + i
        preload[flag] = 0  # 0 > 5 is false: every branch falls through
        lines.append(f"if {flag:x} 1 3 0 0 0 2 0")
        pc = len(lines)
        lines.append(f"vector_dot {0x100 + 16 * i:x} 5 {0x400 + 16 * i:x} 5 {i} 0 0 0")
        tokens[pc] = 100 + i
    text = "\n".join(lines)
    values = {"preload": preload, "result_tokens": tokens}
    sched = Scheduler(assemble(text, KEYMAP), CATALOG, cfg, values=values)
    stats = sched.run()  # completes: no deadlock, no unbounded stall
    assert stats.tlb_evictions > 0
    assert stats.evicted_blocks == 5 * stats.tlb_evictions
    assert stats.stalls["tlb_drain"] == cfg.copy_cycles_per_block * stats.evicted_blocks
    oracle = inorder_execute(sched.program, CATALOG, values)
    mem = sched.arch_memory()
    for block, value in oracle.memory.items():
        assert mem.get(block) == value, f"block 0x{block:x}"
    print(
        f"criterion 9 PASS: {stats.tlb_evictions} evictions, "
        f"{stats.evicted_blocks} blocks, drain {stats.stalls['tlb_drain']} "
        f"== {cfg.copy_cycles_per_block} x blocks; memory matches oracle"
    )
