"""Template parsing, mnemonic classification, lifting to the IR, and the
semantics-preservation property of the simplifying expression constructors."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ric.chunks import load_chunk_records
from ric.constraints import derive_interface
from ric.errors import UnknownMnemonic
from ric.expr import (
    BinOp,
    Const,
    Extract,
    Ite,
    Load,
    ReadLoc,
    Reg,
    UnOp,
    eval_expr,
    simplify,
)
from ric.lift import lift
from ric.template import classify_mnemonic, parse_template


def chunk(template, outputs=(), inputs=(), clobbers=()):
    return load_chunk_records(
        [
            {
                "template": template,
                "outputs": [{"constraint": c, "expr_text": e} for c, e in outputs],
                "inputs": [{"constraint": c, "expr_text": e} for c, e in inputs],
                "clobbers": list(clobbers),
            }
        ]
    )[0]


# ---------------------------------------------------------------------------
# Mnemonics


@pytest.mark.parametrize(
    "word,expect",
    [
        ("movl", ("mov", "l")),
        ("mov", ("mov", "")),
        ("addb", ("add", "b")),
        ("leal", ("lea", "l")),
        ("bswapl", ("bswap", "l")),
        ("cmpxchg8b", ("cmpxchg8b", "")),
        ("setz", ("setz", "")),
        ("cmovz", ("cmovz", "")),
        ("jnz", ("jnz", "")),
        ("movzbl", ("movz", "bl")),
        ("movswl", ("movs", "wl")),
        ("pxor", ("pxor", "")),
    ],
)
def test_classify_mnemonic(word, expect):
    assert classify_mnemonic(word) == expect


@pytest.mark.parametrize("word", ["fldl", "rdtsc", "int3", "sysenter", "divss"])
def test_unknown_mnemonics(word):
    with pytest.raises(UnknownMnemonic):
        classify_mnemonic(word)


# ---------------------------------------------------------------------------
# Template structure


def test_tokens_and_escaped_percent():
    from ric.template import RegT, TokenRef

    c = chunk("movl %%eax, %0", [("=r", "y")])
    parsed = parse_template(c.template, c)
    (ins,) = parsed.instrs
    assert isinstance(ins.operands[0], RegT) and ins.operands[0].parent == "eax"
    assert isinstance(ins.operands[1], TokenRef) and ins.operands[1].ref == 0


def test_malformed_immediate_is_package_error():
    from ric.errors import RicError

    c = chunk("andl $100%%2, %0", [("+r", "y")])
    with pytest.raises(RicError):
        parse_template(c.template, c)


def test_local_labels():
    c = chunk("movl $4, %0\n1: decl %0\njnz 1b", [("=r", "n")], clobbers=["cc"])
    parsed = parse_template(c.template, c)
    # three instructions; the jump resolves to the labeled one
    assert len(parsed.instrs) == 3


def test_semicolon_separated_statements():
    c = chunk("nop; nop ; nop")
    parsed = parse_template(c.template, c)
    assert len(parsed.instrs) == 3


def test_prefix_lock():
    c = chunk("lock; cmpxchgl %3, %0",
              [("+m", "*(p)"), ("=a", "prev")], [("a", "old"), ("r", "new")],
              ["cc"])
    parsed = parse_template(c.template, c)
    (ins,) = parsed.instrs
    assert "lock" in ins.prefixes


# ---------------------------------------------------------------------------
# Lifting


def lift_chunk(c):
    fi = derive_interface(c)
    return lift(parse_template(c.template, c), fi)


def test_lift_kinds():
    c = chunk("movl %1, %0", [("=a", "y")], [("m", "*(p)")])
    _, kinds, _ = lift_chunk(c)
    assert kinds[0] == "fixed" and kinds[1] == "mem"


def test_lift_mov_token_to_token():
    c = chunk("movl %1, %0", [("=r", "y")], [("r", "x")])
    prog, kinds, _ = lift_chunk(c)
    assert kinds == {0: "var", 1: "var"}
    assert len(prog.instrs) >= 1


def test_lift_flags_for_add():
    c = chunk("addl %1, %0", [("+r", "y")], [("r", "x")], ["cc"])
    prog, _, _ = lift_chunk(c)
    from ric.expr import Flag
    from ric.lift import Assign

    flag_writes = {
        i.lhs.name
        for i in prog.instrs
        if isinstance(i, Assign) and isinstance(i.lhs, Flag)
    }
    assert {"z", "c", "s", "o"} <= flag_writes


def test_lift_sib_addressing():
    c = chunk("leal 8(%1,%2,4), %0", [("=r", "a")], [("r", "b"), ("r", "i")])
    prog, _, _ = lift_chunk(c)
    assert prog.instrs  # lifts without error


# ---------------------------------------------------------------------------
# Simplifier semantics property


_REGS = [Reg("eax", 32), Reg("ebx", 32), Reg("ecx", 32)]
_ARITH = ["add", "sub", "mul", "and", "or", "xor", "shl", "shr", "sar"]
_CMPS = ["eq", "ne", "ult", "slt", "ugt", "sgt"]


def _exprs():
    leaves = st.one_of(
        st.integers(0, 2**32 - 1).map(lambda v: Const(v, 32)),
        st.sampled_from(_REGS).map(ReadLoc),
    )

    def extend(children):
        return st.one_of(
            st.tuples(st.sampled_from(_ARITH), children, children).map(
                lambda t: BinOp(t[0], t[1], t[2])
            ),
            st.tuples(st.sampled_from(["not", "neg"]), children).map(
                lambda t: UnOp(t[0], t[1])
            ),
            st.tuples(
                st.sampled_from(_CMPS), children, children, children, children
            ).map(lambda t: Ite(BinOp(t[0], t[1], t[2]), t[3], t[4])),
            st.tuples(st.integers(0, 30), children).map(
                lambda t: BinOp(
                    "concat", Const(0, 31 - t[0]), Extract(t[0], 0, t[1])
                )
            ),
            children.map(lambda e: Load(e, 4)),
        )

    return st.recursive(leaves, extend, max_leaves=12)


def _env(seed):
    vals = {r: (seed * (i + 17) * 2654435761) & 0xFFFFFFFF for i, r in enumerate(_REGS)}

    def get_loc(loc):
        return vals.get(loc, 0)

    def load_mem(addr, size):
        return (addr * 2246822519 + size * 97) & ((1 << (size * 8)) - 1)

    return get_loc, load_mem


@settings(max_examples=250, deadline=None)
@given(_exprs(), st.integers(1, 2**16))
def test_simplify_preserves_semantics(e, seed):
    get_loc, load_mem = _env(seed)
    mask = (1 << e.width) - 1
    before = eval_expr(e, get_loc, load_mem) & mask
    s = simplify(e)
    assert s.width == e.width
    after = eval_expr(s, get_loc, load_mem) & mask
    assert before == after
