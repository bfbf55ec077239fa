"""Concrete-execution oracle: violations on faulty chunks, silence on
compliant ones, determinism, and interpreter spot checks."""

import pytest

from ric.chunks import load_chunk_records
from ric.constraints import derive_interface
from ric.lift import lift
from ric.oracle import (
    SANDBOX_BASE,
    MachineState,
    TrialConfig,
    exec_program,
    oracle_check,
)
from ric.template import parse_template

CFG = TrialConfig(trials=100, seed=0, assignment_cap=256)

PROPS = ("frame_write", "frame_read", "unicity")


def chunk(template, outputs=(), inputs=(), clobbers=()):
    return load_chunk_records(
        [
            {
                "template": template,
                "outputs": [
                    {"constraint": c, "expr_text": e, "size_bytes": s}
                    for c, e, s in outputs
                ],
                "inputs": [
                    {"constraint": c, "expr_text": e, "size_bytes": s}
                    for c, e, s in inputs
                ],
                "clobbers": list(clobbers),
            }
        ]
    )[0]


# ---------------------------------------------------------------------------
# Faulty chunks are caught


FAULTY = [
    ("bad/flags.c", "frame_write", "flag:"),
    ("bad/input_clobbered.c", "frame_write", "ebp"),
    ("bad/reg_clobbered.c", "frame_write", "ecx"),
    ("bad/mem_write.c", "frame_write", "memory"),
    ("bad/mem_read.c", "frame_read", "%0"),
    ("bad/never_written.c", "frame_read", "%0"),
    ("bad/reg_read.c", "frame_read", "%0"),
    ("bad/unicity.c", "unicity", "%0"),
]


@pytest.mark.parametrize("cid,prop,loc_hint", FAULTY)
def test_faulty_chunk_violates(corpus_by_id, cid, prop, loc_hint):
    v = oracle_check(corpus_by_id[cid], prop, CFG)
    assert v.verdict == "violation", (cid, v.reason)
    assert loc_hint in v.witness.location
    assert v.witness.assignment is not None


def test_motivating_unicity_needs_many_trials(corpus_by_id):
    c = corpus_by_id["paper/cas8_x86.c"]
    few = oracle_check(c, "unicity", TrialConfig(trials=100, seed=0))
    assert few.verdict == "inconclusive"
    many = oracle_check(c, "unicity", TrialConfig(trials=600, seed=0))
    assert many.verdict == "violation"
    assert "%0" in many.witness.location


def test_motivating_frame_write_violates(corpus_by_id):
    v = oracle_check(corpus_by_id["paper/cas8_x86.c"], "frame_write", CFG)
    assert v.verdict == "violation"


# ---------------------------------------------------------------------------
# Compliant chunks never produce a violation


def test_no_violation_on_compliant_corpus(corpus_chunks, corpus_results):
    for c in corpus_chunks:
        if corpus_results[c.context.file].verdict != "compliant":
            continue
        for prop in PROPS:
            v = oracle_check(c, prop, CFG)
            assert v.verdict != "violation", (c.context.file, prop, v.witness)


def test_truncated_assignment_set_is_inconclusive():
    c = chunk("nop", inputs=[("r", "x", 4), ("r", "y", 4), ("r", "z", 4)])
    v = oracle_check(c, "frame_write", TrialConfig(trials=10, assignment_cap=4))
    assert v.verdict == "inconclusive"
    assert "truncated" in v.reason


def test_out_of_scope_is_inconclusive(corpus_by_id):
    v = oracle_check(corpus_by_id["oos/fld.c"], "frame_write", CFG)
    assert v.verdict == "inconclusive"
    assert "out of scope" in v.reason


def test_oracle_is_deterministic(corpus_by_id):
    c = corpus_by_id["bad/reg_clobbered.c"]
    a = oracle_check(c, "frame_write", CFG)
    b = oracle_check(c, "frame_write", CFG)
    assert (a.verdict, a.trials_run) == (b.verdict, b.trials_run)
    assert (a.witness.location, a.witness.assignment, a.witness.detail) == (
        b.witness.location,
        b.witness.assignment,
        b.witness.detail,
    )


def test_seed_changes_witness_search(corpus_by_id):
    c = corpus_by_id["bad/reg_clobbered.c"]
    a = oracle_check(c, "frame_write", TrialConfig(trials=100, seed=1))
    assert a.verdict == "violation"  # the bug is found under any seed


# ---------------------------------------------------------------------------
# Interpreter spot checks


def run_program(template, outputs=(), inputs=(), clobbers=(), setup=None):
    c = chunk(template, outputs, inputs, clobbers)
    fi = derive_interface(c)
    prog, _, _ = lift(parse_template(c.template, c), fi)
    m = MachineState(4096)
    if setup:
        setup(m)
    exec_program(prog, m)
    return m


def test_exec_add_sets_flags():
    m = run_program(
        "addl %%ebx, %%eax",
        clobbers=["eax", "ebx", "cc"],
        setup=lambda m: m.regs.update(eax=0xFFFFFFFF, ebx=1),
    )
    assert m.regs["eax"] == 0
    assert m.flags["z"] == 1 and m.flags["c"] == 1


def test_exec_loop_terminates():
    m = run_program(
        "movl $4, %%ecx\n1: decl %%ecx\njnz 1b",
        clobbers=["ecx", "cc"],
    )
    assert m.regs["ecx"] == 0


def test_exec_push_pop_restores_esp():
    m = run_program(
        "pushl %%eax\npopl %%ebx",
        clobbers=["ebx"],
        setup=lambda m: m.regs.update(eax=0x1234, esp=SANDBOX_BASE + 2048),
    )
    assert m.regs["ebx"] == 0x1234
    assert m.regs["esp"] == SANDBOX_BASE + 2048


def test_exec_bswap():
    m = run_program(
        "bswapl %%eax",
        clobbers=["eax"],
        setup=lambda m: m.regs.update(eax=0x11223344),
    )
    assert m.regs["eax"] == 0x44332211


def test_exec_memory_store_load():
    def setup(m):
        m.regs.update(eax=0xDEADBEEF, ebx=SANDBOX_BASE + 512)

    m = run_program(
        "movl %%eax, (%%ebx)\nmovzbl (%%ebx), %%ecx",
        clobbers=["ecx", "memory"],
        setup=setup,
    )
    assert m.load(SANDBOX_BASE + 512, 4) == 0xDEADBEEF
    assert m.regs["ecx"] == 0xEF
