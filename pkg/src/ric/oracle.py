"""Differential oracle: concrete IR execution over randomized states.

The oracle enumerates token assignments, binds memory operands to
disjoint sandbox slots (shared per token across the two sides of a
differential pair), executes the substituted program, and compares
observable results. A pass is testimony within the trial budget, not a
proof.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .checker import init_read
from .constraints import (
    ImmOperand,
    MemOperand,
    RegOperand,
    enumerate_assignments,
    format_operand,
)
from .errors import OutOfSandbox, RicError, StepLimit, UnknownMnemonic
from .expr import (
    Assign,
    Branch,
    Flag,
    Goto,
    Halt,
    Reg,
    StoreLhs,
    Temp,
    eval_expr,
    format_loc,
)
from .lift import lift, substitute, token_kinds
from .template import parse_template

SANDBOX_BASE = 0x10000
STEP_BUDGET = 10**6

GP = ("eax", "ebx", "ecx", "edx", "esi", "edi", "ebp", "esp")
FLAG_NAMES = ("z", "c", "s", "o", "p", "a")
WIDE = tuple(f"mm{i}" for i in range(8)) + tuple(f"xmm{i}" for i in range(8))


@dataclass
class TrialConfig:
    trials: int = 100
    seed: int = 0
    assignment_cap: int = 256
    sandbox_size: int = 65536


class MachineState:
    def __init__(self, sandbox_size):
        self.regs = {r: 0 for r in GP}
        self.wide = {r: 0 for r in WIDE}
        self.flags = {f: 0 for f in FLAG_NAMES}
        self.mem = bytearray(sandbox_size)
        self.temps = {}
        self.syms = {}

    def copy(self):
        m = MachineState(0)
        m.regs = dict(self.regs)
        m.wide = dict(self.wide)
        m.flags = dict(self.flags)
        m.mem = bytearray(self.mem)
        m.temps = {}
        m.syms = dict(self.syms)
        return m

    def load(self, addr, size):
        off = addr - SANDBOX_BASE
        if off < 0 or off + size > len(self.mem):
            raise OutOfSandbox(addr)
        return int.from_bytes(self.mem[off : off + size], "little")

    def store(self, addr, size, value):
        off = addr - SANDBOX_BASE
        if off < 0 or off + size > len(self.mem):
            raise OutOfSandbox(addr)
        self.mem[off : off + size] = (value & ((1 << (size * 8)) - 1)).to_bytes(
            size, "little"
        )

    def get_loc(self, loc):
        from .expr import Sym

        if isinstance(loc, Reg):
            if loc.name in self.regs:
                return self.regs[loc.name]
            return self.wide[loc.name]
        if isinstance(loc, Flag):
            return self.flags[loc.name]
        if isinstance(loc, Temp):
            return self.temps[loc]
        if isinstance(loc, Sym):
            return self.syms.setdefault(loc.name, SANDBOX_BASE + 0x8000)
        raise RicError(f"unbound location {format_loc(loc)} in concrete execution")

    def set_loc(self, loc, value):
        if isinstance(loc, Reg):
            if loc.name in self.regs:
                self.regs[loc.name] = value & 0xFFFFFFFF
            else:
                self.wide[loc.name] = value & ((1 << loc.width) - 1)
            return
        if isinstance(loc, Flag):
            self.flags[loc.name] = value & 1
            return
        if isinstance(loc, Temp):
            self.temps[loc] = value & ((1 << loc.width) - 1)
            return
        raise RicError(f"cannot write location {format_loc(loc)}")


def exec_program(prog, state):
    """Small-step interpretation to Halt; mutates and returns state."""
    pc = 0
    steps = 0
    n = len(prog.instrs)
    while pc < n:
        steps += 1
        if steps > STEP_BUDGET:
            raise StepLimit("step budget exceeded")
        ins = prog.instrs[pc]
        if isinstance(ins, Halt):
            return state
        if isinstance(ins, Assign):
            val = eval_expr(ins.rhs, state.get_loc, state.load)
            if isinstance(ins.lhs, StoreLhs):
                addr = eval_expr(ins.lhs.addr, state.get_loc, state.load)
                state.store(addr, ins.lhs.size, val)
            else:
                state.set_loc(ins.lhs, val)
            pc += 1
        elif isinstance(ins, Goto):
            pc = prog.resolve(ins.target)
        elif isinstance(ins, Branch):
            c = eval_expr(ins.cond, state.get_loc, state.load)
            pc = prog.resolve(ins.then_target if c else ins.else_target)
        else:
            pc += 1
    return state


# ---------------------------------------------------------------------------
# Binding assignments into states


@dataclass
class Binding:
    """Concrete placement of one assignment's memory operands."""

    pins: dict = field(default_factory=dict)  # register -> required value
    cells: dict = field(default_factory=dict)  # token -> concrete cell address


def _slot(cfg, i):
    return SANDBOX_BASE + 0x800 + i * 64


class _Skip(Exception):
    """Trial cannot be set up under this assignment; try another."""


def bind_assignment(fi, assignment, rng, cfg, anchors=()):
    """Pin base/index registers so each memory operand resolves to its
    token's sandbox slot. Entries anchored to a pointer token are placed
    at that token's value plus their declared offset instead. Returns
    None when the pins conflict."""
    b = Binding()
    anchored = {a.entry: a for a in anchors}
    region_of = {}
    for j, base in enumerate(sorted({a.base for a in anchors})):
        region_of[base] = SANDBOX_BASE + 0x4000 + j * 256
    for a in anchors:
        region = region_of[a.base]
        if a.offset < 0 or a.offset + a.size > 256:
            return None
        op = assignment[a.base]
        if not isinstance(op, RegOperand):
            return None
        if op.reg in b.pins and b.pins[op.reg] != region:
            return None
        b.pins[op.reg] = region
        b.cells[a.entry] = region + a.offset
    mem_tokens = sorted(
        p
        for p, op in assignment.items()
        if isinstance(op, MemOperand) and p not in anchored
    )
    for i, p in enumerate(mem_tokens):
        op = assignment[p]
        canon = fi.canonical(p)
        if canon != p and canon in b.cells:
            b.cells[p] = b.cells[canon]
            continue
        idx_part = 0
        if op.index:
            if op.index in b.pins:
                idx_val = b.pins[op.index]
            else:
                idx_val = rng.randrange(0, 8) * 4
                b.pins[op.index] = idx_val
            idx_part = (idx_val * op.scale) & 0xFFFFFFFF
        slot = _slot(cfg, i)
        if op.base in b.pins:
            addr = (b.pins[op.base] + op.disp + idx_part) & 0xFFFFFFFF
            if not (SANDBOX_BASE <= addr and addr + 16 <= SANDBOX_BASE + cfg.sandbox_size):
                return None
            b.cells[p] = addr
        else:
            if op.base is None:
                b.cells[p] = slot
                continue
            b.pins[op.base] = (slot - op.disp - idx_part) & 0xFFFFFFFF
            b.cells[p] = slot
    return b


POOL_SIZE = 4


def random_state(rng, cfg, binding, fi=None, esp_base=None):
    """Fresh randomized state. Register values and token-cell contents
    are drawn from a small per-state pool of sandbox addresses, so that
    equality-dependent control flow (cmp, cmpxchg) is actually exercised
    within the trial budget."""
    m = MachineState(cfg.sandbox_size)
    data_lo = SANDBOX_BASE + 0x1000
    data_hi = SANDBOX_BASE + cfg.sandbox_size - 0x1800
    pool = [
        data_lo + rng.randrange(0, (data_hi - data_lo) // 8) * 8
        for _ in range(POOL_SIZE)
    ]
    for r in GP:
        m.regs[r] = rng.choice(pool)
    for r in WIDE:
        m.wide[r] = rng.getrandbits(64)
    for f in FLAG_NAMES:
        m.flags[f] = rng.getrandbits(1)
    m.regs["esp"] = esp_base if esp_base is not None else (
        SANDBOX_BASE + cfg.sandbox_size - 0x400 - rng.randrange(0, 16) * 4
    )
    m.mem = bytearray(rng.randbytes(cfg.sandbox_size))
    if fi is not None:
        for p, addr in binding.cells.items():
            size = fi.sizes.get(p, 4)
            for off in range(0, size, 4):
                m.store(addr + off, min(4, size - off), rng.choice(pool))
    for reg, val in binding.pins.items():
        m.regs[reg] = val
    return m


def token_value(state, fi, assignment, binding, p):
    """F_eval of one token at its declared width."""
    op = assignment[p]
    bits = fi.sizes.get(p, 4) * 8
    if isinstance(op, ImmOperand):
        return op.value & ((1 << bits) - 1)
    if isinstance(op, RegOperand):
        return state.regs[op.reg] & ((1 << min(bits, 32)) - 1)
    return state.load(binding.cells[p], fi.sizes.get(p, 4))


@dataclass
class Witness:
    property: str
    location: str
    assignment: dict
    assignment2: dict = None
    detail: str = ""

    def to_json(self):
        out = {
            "property": self.property,
            "location": self.location,
            "assignment": self.assignment,
            "detail": self.detail,
        }
        if self.assignment2 is not None:
            out["assignment2"] = self.assignment2
        return out


@dataclass
class OracleVerdict:
    verdict: str  # pass | violation | inconclusive
    witness: Witness = None
    trials_run: int = 0
    reason: str = ""


def _fmt_assignment(a):
    return {f"%{p}": format_operand(op) for p, op in sorted(a.items())}


def _scratch_range(m_in, m_out):
    """Bytes below the entry stack pointer are scratch when esp is
    restored, mirroring the checker's stack-slot exemption."""
    if m_out.regs["esp"] != m_in.regs["esp"]:
        return None
    lo = max(m_in.regs["esp"] - 128, SANDBOX_BASE)
    return (lo - SANDBOX_BASE, m_in.regs["esp"] - SANDBOX_BASE)


def _mem_equal(m1, m2, exempt_ranges):
    a, b = m1.mem, m2.mem
    if len(a) != len(b):
        return None
    if a == b:
        return None
    n = len(a)
    pos = 0
    block = 4096
    while pos < n:
        end = min(pos + block, n)
        if a[pos:end] == b[pos:end]:
            pos = end
            continue
        for i in range(pos, end):
            if a[i] != b[i] and not any(lo <= i < hi for lo, hi in exempt_ranges):
                return i
        pos = end
    return None


class OracleRun:
    def __init__(self, chunk, cfg):
        from .constraints import derive_interface

        self.cfg = cfg
        self.chunk = chunk
        self.fi = derive_interface(chunk)
        parsed = parse_template(chunk.template, chunk)
        self.prog, self.kinds, _ = lift(parsed, self.fi)
        from .checker import build_anchors
        from .template import template_tokens

        self.anchors = tuple(build_anchors(chunk, self.fi, self.kinds))
        refs = template_tokens(parsed)
        collapse = frozenset(
            a.entry for a in self.anchors if a.entry not in refs
        )
        aset = enumerate_assignments(
            self.fi, cap=cfg.assignment_cap, collapse=collapse
        )
        self.assignments = aset.assignments
        self.truncated = aset.truncated

    def bind(self, assignment, rng):
        b = bind_assignment(self.fi, assignment, rng, self.cfg, self.anchors)
        if b is None:
            raise _Skip
        return b

    def run_one(self, assignment, binding, state):
        prog = substitute(self.prog, assignment.mapping)
        return exec_program(prog, state)


def oracle_check(chunk, prop, cfg=None):
    cfg = cfg or TrialConfig()
    try:
        run = OracleRun(chunk, cfg)
    except UnknownMnemonic as e:
        return OracleVerdict("inconclusive", reason=f"out of scope: {e}")
    except RicError as e:
        return OracleVerdict("inconclusive", reason=str(e))
    if not run.assignments:
        return OracleVerdict("inconclusive", reason="no valid token assignment")

    checker = {
        "frame_write": _check_frame_write,
        "frame_read": _check_frame_read,
        "unicity": _check_unicity,
    }[prop]

    bad_trials = 0
    for trial in range(cfg.trials):
        rng = random.Random((cfg.seed << 20) ^ (trial * 2654435761 % 2**31))
        try:
            witness = checker(run, rng, cfg)
        except (StepLimit, OutOfSandbox, _Skip):
            bad_trials += 1
            continue
        if witness is not None:
            return OracleVerdict("violation", witness, trials_run=trial + 1)
    if bad_trials == cfg.trials:
        return OracleVerdict(
            "inconclusive", reason="no executable trial", trials_run=cfg.trials
        )
    if run.truncated:
        return OracleVerdict(
            "inconclusive",
            reason="assignment set truncated at cap",
            trials_run=cfg.trials,
        )
    return OracleVerdict("pass", trials_run=cfg.trials)


def _assignable_regs(fi, assignment):
    regs = set(fi.s_c)
    for p in fi.b_o:
        op = assignment[p]
        if isinstance(op, RegOperand):
            regs.add(op.reg)
    return regs


def _output_cell_ranges(fi, assignment, binding):
    ranges = []
    for p in fi.b_o:
        if isinstance(assignment[p], MemOperand):
            a = binding.cells[p] - SANDBOX_BASE
            ranges.append((a, a + fi.sizes.get(p, 4)))
    return ranges


def _check_frame_write(run, rng, cfg):
    fi = run.fi
    assignment = rng.choice(run.assignments)
    binding = run.bind(assignment, rng)
    m_in = random_state(rng, cfg, binding, fi)
    m_out = run.run_one(assignment, binding, m_in.copy())

    assignable = _assignable_regs(fi, assignment)
    for r in GP:
        if r in assignable or r == "esp":
            continue
        if m_out.regs[r] != m_in.regs[r]:
            return Witness("frame_write", r, _fmt_assignment(assignment.mapping),
                           detail=f"{r}: {m_in.regs[r]:#x} -> {m_out.regs[r]:#x}")
    if m_out.regs["esp"] != m_in.regs["esp"] and "esp" not in assignable:
        return Witness("frame_write", "esp", _fmt_assignment(assignment.mapping),
                       detail=f"esp: {m_in.regs['esp']:#x} -> {m_out.regs['esp']:#x}")
    for r in WIDE:
        if r in assignable:
            continue
        if m_out.wide[r] != m_in.wide[r]:
            return Witness("frame_write", r, _fmt_assignment(assignment.mapping),
                           detail=f"{r} changed")
    if "cc" not in fi.s_c:
        for f in FLAG_NAMES:
            if m_out.flags[f] != m_in.flags[f]:
                return Witness("frame_write", f"flag:{f}", _fmt_assignment(assignment.mapping),
                               detail=f"flag {f} changed")
    if fi.f:
        exempt = _output_cell_ranges(fi, assignment, binding)
        scratch = _scratch_range(m_in, m_out)
        if scratch:
            exempt.append(scratch)
        bad = _mem_equal(m_in, m_out, exempt)
        if bad is not None:
            return Witness(
                "frame_write",
                "memory",
                _fmt_assignment(assignment.mapping),
                detail=f"byte at {SANDBOX_BASE + bad:#x} changed",
            )
    return None


def _inputs_of(fi):
    return sorted(fi.b_i | set(fi.unified))


def _equalize_inputs(fi, assignment, binding, m_src, m_dst, assignment2=None, binding2=None):
    """Copy input-token evaluations from m_src into m_dst. Returns False
    on a pin conflict."""
    a2 = assignment2 or assignment
    b2 = binding2 or binding
    for p in _inputs_of(fi):
        val = token_value(m_src, fi, assignment, binding, p)
        op = a2[p]
        if isinstance(op, ImmOperand):
            if (op.value & ((1 << fi.sizes.get(p, 4) * 8) - 1)) != val:
                return False
            continue
        if isinstance(op, RegOperand):
            if op.reg in b2.pins and b2.pins[op.reg] != val:
                return False
            m_dst.regs[op.reg] = val & 0xFFFFFFFF
            continue
        m_dst.store(b2.cells[p], fi.sizes.get(p, 4), val)
    # inputs sharing a register or overlapping cells must agree, or the
    # pair is not realizable
    for p in _inputs_of(fi):
        want = token_value(m_src, fi, assignment, binding, p)
        if token_value(m_dst, fi, a2, b2, p) != want:
            return False
    return True


def _check_frame_read(run, rng, cfg):
    fi = run.fi
    assignment = rng.choice(run.assignments)
    binding = run.bind(assignment, rng)
    m1 = random_state(rng, cfg, binding, fi)
    m2 = random_state(rng, cfg, binding, fi, esp_base=m1.regs["esp"])
    if not fi.f:
        m2.mem = bytearray(m1.mem)
    if not _equalize_inputs(fi, assignment, binding, m1, m2):
        raise _Skip

    o1 = run.run_one(assignment, binding, m1.copy())
    o2 = run.run_one(assignment, binding, m2.copy())
    return _compare_outputs(
        run, "frame_read", assignment, binding, assignment, binding, m1, m2, o1, o2
    )


def _compare_outputs(run, prop, a1, b1, a2, b2, m1, m2, o1, o2):
    fi = run.fi
    for p in sorted(fi.b_o):
        v1 = token_value(o1, fi, a1, b1, p)
        v2 = token_value(o2, fi, a2, b2, p)
        if v1 != v2:
            return Witness(
                prop,
                f"%{p}",
                _fmt_assignment(a1.mapping),
                assignment2=_fmt_assignment(a2.mapping) if a2 is not a1 else None,
                detail=f"output %{p}: {v1:#x} vs {v2:#x}",
            )
    if not fi.f:
        exempt = []
        s1 = _scratch_range(m1, o1)
        s2 = _scratch_range(m2, o2)
        if s1 and s2 and s1 == s2:
            exempt.append(s1)
        bad = _mem_equal(o1, o2, exempt)
        if bad is not None:
            return Witness(
                prop,
                "memory",
                _fmt_assignment(a1.mapping),
                assignment2=_fmt_assignment(a2.mapping) if a2 is not a1 else None,
                detail=f"memory differs at {SANDBOX_BASE + bad:#x}",
            )
    return None


def _check_unicity(run, rng, cfg):
    fi = run.fi
    a1 = rng.choice(run.assignments)
    a2 = rng.choice(run.assignments)
    # immediates cannot be equalized across the pair; require equality
    for p in _inputs_of(fi):
        o1, o2 = a1[p], a2[p]
        if isinstance(o1, ImmOperand) != isinstance(o2, ImmOperand):
            raise _Skip
        if isinstance(o1, ImmOperand) and o1.value != o2.value:
            raise _Skip
    b1 = run.bind(a1, rng)
    b2 = run.bind(a2, rng)
    m1 = random_state(rng, cfg, b1, fi)
    m2 = random_state(rng, cfg, b2, fi, esp_base=m1.regs["esp"])
    if not fi.f:
        # the memory-equality clause of input equivalence
        m2.mem = bytearray(m1.mem)
    if not _equalize_inputs(fi, a1, b1, m1, m2, assignment2=a2, binding2=b2):
        raise _Skip
    if not fi.f and _mem_equal(m1, m2, []) is not None:
        raise _Skip
    o1 = run.run_one(a1, b1, m1.copy())
    o2 = run.run_one(a2, b2, m2.copy())
    return _compare_outputs(run, "unicity", a1, b1, a2, b2, m1, m2, o1, o2)
