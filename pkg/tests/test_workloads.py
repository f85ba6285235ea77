"""Benchmark generators: structure, dependency shapes, determinism."""

import pytest

from htsim.accel import default_catalog
from htsim.core import Scheduler, TaskState
from htsim.isa import assemble
from htsim.policies import Policy, run_policy
from htsim.workloads import (
    AudioSpec,
    BenchmarkKind,
    BenchmarkSpec,
    InvalidSpec,
    generate,
    generate_audio,
    generate_audio_program,
    generate_program,
)

CATALOG = default_catalog()
KEYMAP = CATALOG.keymap()

ALL_KINDS = list(BenchmarkKind)


def tasks_of(sched):
    return [r for r in sched.records if r.state is TaskState.DONE]


def run_hts(program, values, speculation=True):
    sched = Scheduler(program, CATALOG, values=values, speculation=speculation)
    sched.run()
    return sched


def test_kind_names_round_trip():
    for kind in ALL_KINDS:
        assert BenchmarkKind.from_name(kind.value) is kind
    assert len(ALL_KINDS) == 9
    with pytest.raises(InvalidSpec):
        BenchmarkKind.from_name("no_dep")


def test_zero_tasks_rejected():
    with pytest.raises(InvalidSpec):
        generate_program(BenchmarkSpec(kind=BenchmarkKind.NO_DEP, n_tasks=0), CATALOG)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
def test_text_and_program_forms_agree(kind):
    spec = BenchmarkSpec(kind=kind, n_tasks=8, seed=2)
    program, values = generate_program(spec, CATALOG)
    text, text_values = generate(spec, CATALOG)
    assert assemble(text, KEYMAP) == program
    assert text_values == values


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
def test_generation_is_deterministic(kind):
    spec = BenchmarkSpec(kind=kind, n_tasks=8, seed=7)
    assert generate(spec, CATALOG) == generate(spec, CATALOG)


def test_random_dep_seed_changes_program():
    a, _ = generate(BenchmarkSpec(kind=BenchmarkKind.RANDOM_DEP, n_tasks=16, seed=0), CATALOG)
    b, _ = generate(BenchmarkSpec(kind=BenchmarkKind.RANDOM_DEP, n_tasks=16, seed=1), CATALOG)
    assert a != b


@pytest.mark.parametrize("kind", ALL_KINDS, ids=lambda k: k.value)
@pytest.mark.parametrize("policy", list(Policy), ids=lambda p: p.value)
def test_every_kind_runs_under_every_policy(kind, policy):
    spec = BenchmarkSpec(kind=kind, n_tasks=6, seed=0)
    if kind is BenchmarkKind.SAME_DEP:
        spec = BenchmarkSpec(kind=kind, n_tasks=6, seed=0, extra={"function": "iir"})
    program, values = generate_program(spec, CATALOG)
    stats = run_policy(policy, program, CATALOG, values=values)
    assert stats.makespan > 0
    assert stats.tasks_completed > 0


def test_no_dep_has_no_edges():
    program, values = generate_program(
        BenchmarkSpec(kind=BenchmarkKind.NO_DEP, n_tasks=12), CATALOG
    )
    sched = run_hts(program, values)
    done = tasks_of(sched)
    assert len(done) == 12
    assert all(r.initial_deps == frozenset() for r in done)
    # regions must be pairwise disjoint for that to be legitimate
    regions = [r.arch_out for r in done] + [r.arch_in for r in done]
    for i, a in enumerate(regions):
        for b in regions[i + 1 :]:
            assert not a.overlaps(b)


def test_same_dep_is_a_single_chain():
    program, values = generate_program(
        BenchmarkSpec(kind=BenchmarkKind.SAME_DEP, n_tasks=9, extra={"function": "vector_dot"}),
        CATALOG,
    )
    sched = run_hts(program, values)
    done = tasks_of(sched)
    assert len(done) == 9
    assert all(r.keyname == "vector_dot" for r in done)
    assert done[0].initial_deps == frozenset()
    for prev, rec in zip(done, done[1:]):
        assert rec.initial_deps == frozenset({prev.seq})
        assert rec.issued >= prev.completed


def test_diff_dep_chains_across_functions():
    program, values = generate_program(
        BenchmarkSpec(kind=BenchmarkKind.DIFF_DEP, n_tasks=10), CATALOG
    )
    sched = run_hts(program, values)
    done = tasks_of(sched)
    assert len(done) == 10
    assert len({r.keyname for r in done}) >= 5  # walks the function rotation
    for prev, rec in zip(done, done[1:]):
        assert prev.seq in rec.initial_deps


def test_random_dep_edges_point_backwards():
    for seed in range(6):
        program, values = generate_program(
            BenchmarkSpec(kind=BenchmarkKind.RANDOM_DEP, n_tasks=24, seed=seed), CATALOG
        )
        sched = run_hts(program, values)
        done = tasks_of(sched)
        assert len(done) == 24
        assert any(r.initial_deps for r in done)  # actually has dependencies
        for rec in done:
            assert all(dep < rec.seq for dep in rec.initial_deps)


def test_loop_no_dep_iterations_are_independent():
    program, values = generate_program(
        BenchmarkSpec(kind=BenchmarkKind.LOOP_NO_DEP, n_tasks=6), CATALOG
    )
    sched = run_hts(program, values)
    done = tasks_of(sched)
    assert len(done) == 6
    assert all(r.initial_deps == frozenset() for r in done)
    outs = [r.arch_out for r in done]
    assert len({(r.base, r.size) for r in outs}) == 6  # strided, distinct


def test_loop_dep_iterations_share_one_producer():
    program, values = generate_program(
        BenchmarkSpec(kind=BenchmarkKind.LOOP_DEP, n_tasks=6), CATALOG
    )
    sched = run_hts(program, values)
    done = tasks_of(sched)
    assert len(done) == 7  # producer + iterations
    producer, *iters = done
    assert producer.initial_deps == frozenset()
    for rec in iters:
        assert rec.initial_deps == frozenset({producer.seq})
        assert rec.arch_in == producer.arch_out
    # no iteration-to-iteration edges: with two units they overlap
    two = CATALOG.customized(instances={rec.keyname: 2 for rec in iters})
    fast = Scheduler(program, two, values=values)
    fast.run()
    slow_span = sched.stats.makespan
    assert fast.stats.makespan < slow_span


BRANCH_KINDS = [
    BenchmarkKind.BRANCH_TAKEN_NO_DEP,
    BenchmarkKind.BRANCH_NOT_TAKEN_NO_DEP,
    BenchmarkKind.BRANCH_TAKEN_DEP,
]


@pytest.mark.parametrize("kind", BRANCH_KINDS, ids=lambda k: k.value)
def test_branch_kinds_execute_exactly_one_side(kind):
    n = 10
    program, values = generate_program(BenchmarkSpec(kind=kind, n_tasks=n), CATALOG)
    side = max(1, n // 2)
    for speculation in (False, True):
        sched = run_hts(program, values, speculation=speculation)
        done = tasks_of(sched)
        has_producer = kind is BenchmarkKind.BRANCH_TAKEN_DEP
        assert len(done) == side + (1 if has_producer else 0)


def test_branch_taken_and_not_taken_pick_different_sides():
    taken_prog, taken_vals = generate_program(
        BenchmarkSpec(kind=BenchmarkKind.BRANCH_TAKEN_NO_DEP, n_tasks=8), CATALOG
    )
    nt_prog, nt_vals = generate_program(
        BenchmarkSpec(kind=BenchmarkKind.BRANCH_NOT_TAKEN_NO_DEP, n_tasks=8), CATALOG
    )
    # identical program shape; the executed side is told apart by position:
    # the fall-through block sits right after the if, the taken block after
    # the closing jump.
    taken_pcs = {r.program_index for r in tasks_of(run_hts(taken_prog, taken_vals))}
    nt_pcs = {r.program_index for r in tasks_of(run_hts(nt_prog, nt_vals))}
    assert len(taken_prog) == len(nt_prog)
    assert min(taken_pcs) > max(nt_pcs)


def test_branch_not_taken_benefits_from_speculation():
    program, values = generate_program(
        BenchmarkSpec(kind=BenchmarkKind.BRANCH_NOT_TAKEN_NO_DEP, n_tasks=8), CATALOG
    )
    plain = run_hts(program, values, speculation=False).stats
    spec = run_hts(program, values, speculation=True).stats
    assert plain.makespan - spec.makespan >= 200


# ---- audio application -----------------------------------------------------


def test_audio_frequency_path_task_mix():
    program, values = generate_audio_program(AudioSpec(bands=4), CATALOG)
    sched = run_hts(program, values)
    done = tasks_of(sched)
    by_key = {}
    for rec in done:
        by_key[rec.keyname] = by_key.get(rec.keyname, 0) + 1
    # one classifier, then per band: two transforms and three dot products
    assert by_key == {"correlation": 1, "fft_256": 8, "vector_dot": 12}
    assert sched.stats.tasks_completed == 21


def test_audio_time_domain_path_task_mix():
    program, values = generate_audio_program(
        AudioSpec(bands=1, time_domain=True), CATALOG
    )
    sched = run_hts(program, values)
    done = tasks_of(sched)
    by_key = {}
    for rec in done:
        by_key[rec.keyname] = by_key.get(rec.keyname, 0) + 1
    assert by_key == {"correlation": 1, "real_fir": 3}


def test_audio_band_iterations_chain_within_a_band():
    program, values = generate_audio_program(AudioSpec(bands=2), CATALOG)
    sched = run_hts(program, values)
    done = tasks_of(sched)
    ffts = [r for r in done if r.keyname == "fft_256"]
    dots = [r for r in done if r.keyname == "vector_dot"]
    # every dot product is downstream of some transform
    assert all(r.initial_deps for r in dots)
    # the two bands' leading transforms are independent of each other
    leads = [r for r in ffts if not r.initial_deps]
    assert len(leads) >= 1


def test_audio_text_form_matches_program():
    spec = AudioSpec(bands=2, time_domain=False, seed=4)
    text, text_values = generate_audio(spec, CATALOG)
    program, values = generate_audio_program(spec, CATALOG)
    assert assemble(text, KEYMAP) == program
    assert text_values == values
    assert generate_audio(spec, CATALOG) == generate_audio(spec, CATALOG)


def test_audio_zero_bands_rejected():
    with pytest.raises(InvalidSpec):
        generate_audio_program(AudioSpec(bands=0), CATALOG)


def test_audio_speculation_hides_the_branch_read():
    program, values = generate_audio_program(AudioSpec(bands=2), CATALOG)
    plain = run_hts(program, values, speculation=False).stats
    spec = run_hts(program, values, speculation=True).stats
    assert spec.makespan < plain.makespan
    assert spec.spec_committed == 1
