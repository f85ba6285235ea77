"""Command line front end: run, sweep, gen, asm.

Exit codes: 1 I/O errors, 2 assembly or program errors, 3 configuration
errors, 4 deadlock.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from .accel import AcceleratorCatalog, default_catalog
from .config import ConfigError, SimConfig, load_config
from .core import DeadlockDetected, ProgramError, SimStats, TmExhaustedUnderSpeculation
from .isa import Program, assemble, disassemble, from_bytes, to_bytes
from .policies import CostModel, Policy, run_policy
from .workloads import (
    AudioSpec,
    BenchmarkKind,
    BenchmarkSpec,
    InvalidSpec,
    generate_audio_program,
    generate_program,
)

EXIT_IO = 1
EXIT_ASM = 2
EXIT_CONFIG = 3
EXIT_DEADLOCK = 4

SWEEP_BENCHMARKS = [kind.value for kind in BenchmarkKind] + ["audio"]


def _build_catalog(config: SimConfig, fus: dict[str, int] | None = None) -> AcceleratorCatalog:
    catalog = default_catalog().customized(config.latencies, config.instances)
    if fus:
        catalog = catalog.customized(instances=fus)
    return catalog


def _parse_fus(text: str) -> dict[str, int] | int:
    """Either a uniform count ("2") or per-function counts ("fft_256=2,iir=1")."""
    text = text.strip()
    if text.isdigit():
        return int(text)
    counts: dict[str, int] = {}
    for part in text.split(","):
        name, _, value = part.partition("=")
        if not value or not value.isdigit() or int(value) < 1:
            raise ConfigError(f"bad functional unit spec {part!r}; expected name=count")
        counts[name.strip()] = int(value)
    return counts


def _fu_summary(catalog: AcceleratorCatalog) -> str:
    counts = [catalog.count(spec.keyname) for spec in catalog.functions]
    if len(set(counts)) == 1:
        return str(counts[0])
    return ";".join(
        f"{spec.keyname}={catalog.count(spec.keyname)}" for spec in catalog.functions
    )


def _load_program(path: Path, catalog: AcceleratorCatalog) -> Program:
    if path.suffix == ".htsbin":
        return from_bytes(path.read_bytes())
    return assemble(path.read_text(encoding="utf-8"), catalog.keymap())


def _load_values(path: Path, explicit: str | None) -> dict | None:
    if explicit:
        with open(explicit, "r", encoding="utf-8") as fh:
            return json.load(fh)
    sidecar = path.parent / (path.stem + ".values.json")
    if sidecar.exists():
        with open(sidecar, "r", encoding="utf-8") as fh:
            return json.load(fh)
    return None


def _csv_columns(catalog: AcceleratorCatalog) -> list[str]:
    return [
        "workload",
        "policy",
        "fus",
        "makespan",
        "total_cycles",
        "tasks_dispatched",
        "tasks_completed",
        "tasks_aborted",
        "scalar_ops",
        "spec_entered",
        "spec_committed",
        "spec_squashed",
        "tlb_evictions",
        "evicted_blocks",
        "tm_exhausted_events",
        "stall_rs_full",
        "stall_sw_overhead",
        "stall_tlb_drain",
        "stall_branch_wait",
        "stall_bubble",
        "stall_tm_exhausted",
    ] + [f"util_{spec.keyname}" for spec in catalog.functions]


def _csv_row(
    workload: str, stats: SimStats, fus: str, catalog: AcceleratorCatalog
) -> list[str]:
    row = [
        workload,
        stats.policy,
        fus,
        str(stats.makespan),
        str(stats.total_cycles),
        str(stats.tasks_dispatched),
        str(stats.tasks_completed),
        str(stats.tasks_aborted),
        str(stats.scalar_ops),
        str(stats.spec_entered),
        str(stats.spec_committed),
        str(stats.spec_squashed),
        str(stats.tlb_evictions),
        str(stats.evicted_blocks),
        str(stats.tm_exhausted_events),
        str(stats.stalls.get("rs_full", 0)),
        str(stats.stalls.get("sw_overhead", 0)),
        str(stats.stalls.get("tlb_drain", 0)),
        str(stats.stalls.get("branch_wait", 0)),
        str(stats.stalls.get("bubble", 0)),
        str(stats.stalls.get("tm_exhausted", 0)),
    ]
    for spec in catalog.functions:
        row.append(f"{stats.utilization.get(spec.keyname, 0.0):.6f}")
    return row


def _write_csv(path: str, catalog: AcceleratorCatalog, rows: list[list[str]]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_csv_columns(catalog))
        writer.writerows(rows)


def _write_plot_data(path, benchmarks, policies, fu_counts, rows):
    """Makespan pivot: one row per workload, one column per policy/FU pair."""
    makespan = {key: int(row[3]) for key, row in rows.items()}
    header = ["workload"] + [
        f"{policy.value}@fus={fu}" for policy in policies for fu in fu_counts
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for name in benchmarks:
            line = [name]
            for policy in policies:
                for fu in fu_counts:
                    value = makespan.get((name, policy.value, fu))
                    line.append("" if value is None else str(value))
            writer.writerow(line)


def _stats_blob(stats: SimStats, extra: dict, deterministic: bool) -> dict:
    blob = stats.to_dict()
    blob.update(extra)
    if not deterministic:
        blob["generated_at"] = datetime.now(timezone.utc).isoformat()
    return blob


def _dump_json(path: str, blob: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _print_summary(stats: SimStats):
    print(f"policy        {stats.policy}")
    print(f"makespan      {stats.makespan} cycles")
    print(
        f"tasks         {stats.tasks_completed} completed, "
        f"{stats.tasks_aborted} aborted ({stats.tasks_dispatched} dispatched)"
    )
    if stats.spec_entered:
        print(
            f"speculation   {stats.spec_entered} entered, "
            f"{stats.spec_committed} committed, {stats.spec_squashed} squashed"
        )
    if stats.stalls:
        parts = " ".join(f"{k}={v}" for k, v in sorted(stats.stalls.items()))
        print(f"stalls        {parts}")
    busy = [
        f"{name}={stats.utilization[name]:.3f}"
        for name in sorted(stats.utilization)
        if stats.utilization[name] > 0
    ]
    if busy:
        print(f"utilization   {' '.join(busy)}")


def cmd_run(args) -> int:
    config = load_config(args.config) if args.config else SimConfig()
    fus = _parse_fus(args.fus) if args.fus else None
    if isinstance(fus, int):
        catalog = _build_catalog(config).uniform_instances(fus)
    else:
        catalog = _build_catalog(config, fus)
    path = Path(args.program)
    program = _load_program(path, catalog)
    if not program:
        print("error: empty program", file=sys.stderr)
        return EXIT_ASM
    values = _load_values(path, args.values)
    policy = Policy.from_name(args.policy)
    cost = CostModel.from_config(config)
    trace_sink: list | None = [] if args.trace else None
    stats = run_policy(
        policy, program, catalog, cost, config, values=values, trace_sink=trace_sink
    )
    workload = path.stem
    _print_summary(stats)
    json_path = args.json or str(path.parent / (path.stem + ".stats.json"))
    _dump_json(
        json_path,
        _stats_blob(
            stats,
            {"workload": workload, "fus": _fu_summary(catalog)},
            args.deterministic,
        ),
    )
    print(f"stats written to {json_path}")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for event in trace_sink or []:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
        print(f"trace written to {args.trace}")
    if args.csv:
        _write_csv(
            args.csv,
            catalog,
            [_csv_row(workload, stats, _fu_summary(catalog), catalog)],
        )
        print(f"csv written to {args.csv}")
    return 0


def _make_workload(
    name: str, args, catalog: AcceleratorCatalog
) -> tuple[Program, dict]:
    if name == "audio":
        spec = AudioSpec(bands=args.bands, time_domain=args.time_domain, seed=args.seed)
        return generate_audio_program(spec, catalog)
    kind = BenchmarkKind.from_name(name)
    return generate_program(
        BenchmarkSpec(kind=kind, n_tasks=args.tasks, seed=args.seed), catalog
    )


def _sweep_worker(cell, config, cost):
    name, program, values, policy, fu = cell
    catalog = _build_catalog(config).uniform_instances(fu)
    stats = run_policy(policy, program, catalog, cost, config, values=values)
    return _csv_row(name, stats, str(fu), catalog)


def cmd_sweep(args) -> int:
    config = load_config(args.config) if args.config else SimConfig()
    cost = CostModel.from_config(config)
    benchmarks = [b.strip() for b in args.benchmarks.split(",") if b.strip()]
    policies = [Policy.from_name(p.strip()) for p in args.policies.split(",") if p.strip()]
    fu_counts = []
    for part in args.fus.split(","):
        part = part.strip()
        if not part.isdigit() or int(part) < 1:
            raise ConfigError(f"bad functional unit count {part!r}")
        fu_counts.append(int(part))
    for name in benchmarks:
        if name not in SWEEP_BENCHMARKS:
            raise InvalidSpec(
                f"unknown benchmark {name!r}; choose from " + ", ".join(SWEEP_BENCHMARKS)
            )

    base_catalog = _build_catalog(config)
    generated = {name: _make_workload(name, args, base_catalog) for name in benchmarks}
    cells = [
        (name, generated[name][0], generated[name][1], policy, fu)
        for name in benchmarks
        for policy in policies
        for fu in fu_counts
    ]

    threads = os.environ.get("HTSIM_THREADS", "")
    if threads:
        try:
            workers = max(1, int(threads))
        except ValueError:
            raise ConfigError(f"HTSIM_THREADS must be an integer, got {threads!r}") from None
    else:
        workers = min(8, os.cpu_count() or 1)

    rows = {}
    failures = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(_sweep_worker, cell, config, cost): cell for cell in cells
        }
        for future, cell in futures.items():
            name, _, _, policy, fu = cell
            key = (name, policy.value, fu)
            try:
                rows[key] = future.result()
            except Exception as err:  # noqa: BLE001 - cell identity must survive
                failures.append((key, err))

    order = {name: i for i, name in enumerate(benchmarks)}
    policy_order = {p.value: i for i, p in enumerate(policies)}
    sorted_keys = sorted(rows, key=lambda k: (order[k[0]], policy_order[k[1]], k[2]))
    sorted_rows = [rows[key] for key in sorted_keys]
    _write_csv(args.csv, base_catalog, sorted_rows)
    print(f"{len(sorted_rows)} rows written to {args.csv}")
    if args.plot_data:
        _write_plot_data(args.plot_data, benchmarks, policies, fu_counts, rows)
        print(f"plot data written to {args.plot_data}")
    for (name, policy, fu), err in failures:
        print(f"error: cell {name}/{policy}/fus={fu}: {err}", file=sys.stderr)
    if failures:
        if any(isinstance(err, DeadlockDetected) for _, err in failures):
            return EXIT_DEADLOCK
        return EXIT_IO
    return 0


def cmd_gen(args) -> int:
    catalog = default_catalog()
    if args.benchmark == "audio":
        spec = AudioSpec(bands=args.bands, time_domain=args.time_domain, seed=args.seed)
        program, values = generate_audio_program(spec, catalog)
    else:
        kind = BenchmarkKind.from_name(args.benchmark)
        bench = BenchmarkSpec(kind=kind, n_tasks=args.tasks, seed=args.seed)
        program, values = generate_program(bench, catalog)
    out = Path(args.output or f"{args.benchmark}.asm")
    out.write_text(disassemble(program, catalog.keymap()), encoding="utf-8")
    print(f"program written to {out}")
    if values.get("preload") or values.get("result_tokens"):
        sidecar = out.parent / (out.stem + ".values.json")
        with open(sidecar, "w", encoding="utf-8") as fh:
            json.dump(values, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"values written to {sidecar}")
    return 0


def cmd_asm(args) -> int:
    catalog = default_catalog()
    path = Path(args.input)
    if path.suffix == ".htsbin":
        program = from_bytes(path.read_bytes())
        out = Path(args.output or path.with_suffix(".asm"))
        out.write_text(disassemble(program, catalog.keymap()), encoding="utf-8")
    else:
        program = assemble(path.read_text(encoding="utf-8"), catalog.keymap())
        out = Path(args.output or path.with_suffix(".htsbin"))
        out.write_bytes(to_bytes(program))
    print(f"{len(program)} instructions written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="htsim", description="Hardware task scheduler simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one program")
    run.add_argument("program", help="path to .asm or .htsbin")
    run.add_argument("--policy", default=Policy.HTS_SPEC.value,
                     choices=[p.value for p in Policy])
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--fus", help="uniform count or name=count,... overrides")
    run.add_argument("--values", help="preload/result-token JSON")
    run.add_argument("--json", help="stats JSON path (default <program>.stats.json)")
    run.add_argument("--csv", help="also write a one-row CSV")
    run.add_argument("--trace", help="JSONL cycle trace path")
    run.add_argument("--deterministic", action="store_true",
                     help="omit timestamps for byte-identical reruns")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="benchmark x policy x FU grid")
    sweep.add_argument("--benchmarks", default=",".join(SWEEP_BENCHMARKS))
    sweep.add_argument("--policies", default=",".join(p.value for p in Policy))
    sweep.add_argument("--fus", default="1,2", help="comma list of uniform FU counts")
    sweep.add_argument("--tasks", type=int, default=30)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--bands", type=int, default=4)
    sweep.add_argument("--time-domain", action="store_true")
    sweep.add_argument("--config", help="JSON config file")
    sweep.add_argument("--csv", default="sweep.csv")
    sweep.add_argument("--plot-data", help="also write a makespan pivot CSV")
    sweep.add_argument("--deterministic", action="store_true")
    sweep.set_defaults(func=cmd_sweep)

    gen = sub.add_parser("gen", help="generate a benchmark program")
    gen.add_argument("benchmark", choices=SWEEP_BENCHMARKS)
    gen.add_argument("--tasks", type=int, default=30)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--bands", type=int, default=4)
    domain = gen.add_mutually_exclusive_group()
    domain.add_argument("--time-domain", action="store_true")
    domain.add_argument("--freq", action="store_true",
                        help="frequency path (the default)")
    gen.add_argument("-o", "--output", help="output .asm path")
    gen.set_defaults(func=cmd_gen)

    asm = sub.add_parser("asm", help="assemble .asm or disassemble .htsbin")
    asm.add_argument("input")
    asm.add_argument("-o", "--output")
    asm.set_defaults(func=cmd_asm)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, InvalidSpec, TmExhaustedUnderSpeculation) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ProgramError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ASM
    except DeadlockDetected as err:
        print(f"error: deadlock: {err}", file=sys.stderr)
        return EXIT_DEADLOCK


if __name__ == "__main__":
    sys.exit(main())
