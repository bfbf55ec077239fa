"""Interface edits that repair framing and unicity findings.

Each finding category maps to a fixed edit shape; the edits are applied
to a copy of the chunk with consistent renumbering of template tokens
and matching digits, then the result is re-checked.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass, replace

from .checker import check_chunk
from .chunks import OperandEntry, render
from .constraints import derive_interface, enumerate_assignments
from .errors import RicError, SpanStale

REG_LETTER = {"eax": "a", "ebx": "b", "ecx": "c", "edx": "d", "esi": "S", "edi": "D"}


@dataclass(frozen=True)
class AddOutput:
    constraint: str
    lvalue: str
    matched_input: int = None

    def describe(self):
        tail = f" matching %{self.matched_input}" if self.matched_input is not None else ""
        return f'add output "{self.constraint}" ({self.lvalue}){tail}'


@dataclass(frozen=True)
class AddInput:
    constraint: str
    source: str

    def describe(self):
        return f'add input "{self.constraint}" ({self.source})'


@dataclass(frozen=True)
class AddClobber:
    name: str

    def describe(self):
        return f'add clobber "{self.name}"'


@dataclass(frozen=True)
class SetMemoryClobber:
    def describe(self):
        return 'add clobber "memory"'


@dataclass(frozen=True)
class MarkEarlyClobber:
    token: int

    def describe(self):
        return f"mark %{self.token} early-clobber (&)"


@dataclass(frozen=True)
class PromoteToReadWrite:
    token: int

    def describe(self):
        return f"promote %{self.token} to read-write (+)"


def edit_to_json(edit):
    out = {"edit": type(edit).__name__}
    for f in getattr(edit, "__dataclass_fields__", {}):
        out[f] = getattr(edit, f)
    return out


@dataclass
class PatchResult:
    patched: object  # ChunkAst
    edits: list
    unresolved: list
    renumber_map: dict
    original: object = None


def _strip_modifiers(constraint):
    return constraint.lstrip("=+&%")


def _input_entry_fixed_to(chunk, fi, reg):
    """The input entry whose constraint pins it to the given register."""
    for e in chunk.inputs:
        if fi.fixed.get(e.position) == reg:
            return e
    return None


def synthesize_patches(chunk, issues):
    from .expr import Flag, MemoryWhole, Reg, Token

    try:
        fi = derive_interface(chunk)
    except RicError:
        return PatchResult(chunk, [], list(issues), {}, original=chunk)

    edits = []
    unresolved = []
    clobbers_to_add = []
    memory_clobber = False
    promote = set()
    early = set()
    dummy_outputs = []  # (constraint, lvalue, matched input position)
    add_inputs = []  # (matched output position, source text)

    def add_clobber(name):
        if name not in chunk.clobbers and name not in clobbers_to_add:
            clobbers_to_add.append(name)

    for issue in sorted(issues, key=lambda i: (i.point, i.category)):
        cat = issue.category
        loc = issue.location
        if cat == "FlagClobbered":
            add_clobber("cc")
        elif cat == "UnboundRegisterClobbered" and isinstance(loc, Reg):
            add_clobber(loc.name)
        elif cat == "ReadOnlyInputClobbered":
            if isinstance(loc, Reg):
                entry = _input_entry_fixed_to(chunk, fi, loc.name)
                letter = REG_LETTER.get(loc.name)
                if entry is None or letter is None:
                    if letter is None:
                        add_clobber(loc.name)
                    else:
                        unresolved.append(issue)
                    continue
                if not any(m == entry.position for _, _, m in dummy_outputs):
                    dummy_outputs.append((f"={letter}", None, entry.position))
            elif isinstance(loc, Token):
                promote.add(loc.index)
            else:
                unresolved.append(issue)
        elif cat in ("UnboundMemoryWrite", "UnboundMemoryRead"):
            if "memory" not in chunk.clobbers:
                memory_clobber = True
        elif cat == "NonWrittenWriteOnlyOutput" and isinstance(loc, Token):
            promote.add(loc.index)
        elif cat == "UnboundRegisterRead":
            if isinstance(loc, Token):
                p = loc.index
                if p in fi.b_o:
                    out = next(e for e in chunk.outputs if e.position == p)
                    add_inputs.append((p, out.expr_text))
                else:
                    unresolved.append(issue)
            else:
                # reading a register (or entry flags) before assigning it
                # cannot be expressed as an interface edit
                unresolved.append(issue)
        elif cat == "Unicity":
            if isinstance(loc, Reg):
                add_clobber(loc.name)
            elif isinstance(loc, Token) and loc.index in fi.b_o:
                early.add(loc.index)
            else:
                unresolved.append(issue)
        else:
            unresolved.append(issue)

    # materialize the new entry lists
    outputs = list(chunk.outputs)
    inputs = [e for e in chunk.inputs if e.position not in promote]
    promoted = [e for e in chunk.inputs if e.position in promote]
    renumber = {}

    for e in outputs:
        renumber[e.position] = e.position
    next_pos = len(outputs)

    new_outputs = []
    for e in promoted:
        new_outputs.append(
            OperandEntry("+" + _strip_modifiers(e.constraint), e.expr_text, next_pos,
                         e.size_bytes, e.name)
        )
        renumber[e.position] = next_pos
        edits.append(PromoteToReadWrite(e.position))
        next_pos += 1

    taken = " ".join(e.expr_text for e in chunk.entries)
    matched_at = {}
    dummy_n = 0
    for constraint, _, matched in dummy_outputs:
        while f"_ric_dummy{dummy_n}" in taken:
            dummy_n += 1
        lvalue = f"_ric_dummy{dummy_n}"
        dummy_n += 1
        new_outputs.append(OperandEntry(constraint, lvalue, next_pos, 4, None))
        matched_at[matched] = next_pos
        edits.append(AddOutput(constraint, lvalue, matched))
        next_pos += 1

    outputs.extend(new_outputs)

    new_inputs = []
    for e in inputs:
        constraint = e.constraint
        if e.position in matched_at:
            constraint = str(matched_at[e.position])
        new_inputs.append(replace(e, constraint=constraint, position=next_pos))
        renumber[e.position] = next_pos
        next_pos += 1
    for p, source in add_inputs:
        constraint = str(renumber[p])
        new_inputs.append(OperandEntry(constraint, source, next_pos, fi.sizes.get(p, 4)))
        edits.append(AddInput(constraint, source))
        next_pos += 1

    for p in sorted(early):
        idx = next(i for i, e in enumerate(outputs) if e.position == renumber.get(p, p))
        e = outputs[idx]
        if "&" not in e.constraint:
            mode = e.constraint[0]
            outputs[idx] = replace(e, constraint=mode + "&" + e.constraint[1:])
            edits.append(MarkEarlyClobber(p))

    clobbers = list(chunk.clobbers)
    for name in clobbers_to_add:
        clobbers.append(name)
        edits.append(AddClobber(name))
    if memory_clobber:
        clobbers.append("memory")
        edits.append(SetMemoryClobber())

    # matching digits always name outputs, and original output positions
    # are preserved, so constraints need no renumbering here
    template = _renumber_template(chunk.template, renumber)
    patched = replace(
        chunk,
        template=template,
        outputs=tuple(outputs),
        inputs=tuple(new_inputs),
        clobbers=tuple(clobbers),
    )
    return PatchResult(patched, edits, unresolved, renumber, original=chunk)


_NUM_TOKEN = re.compile(r"%([bwk]?)(\d+)")


def _renumber_template(template, renumber):
    def sub(m):
        start = m.start()
        if start > 0 and template[start - 1] == "%":
            return m.group(0)
        old = int(m.group(2))
        return f"%{m.group(1)}{renumber.get(old, old)}"

    return _NUM_TOKEN.sub(sub, template)


def _renumber_matches(entry, renumber):
    """Rewrite matching-digit constraints through the renumber map."""

    def sub(m):
        old = int(m.group(0))
        return str(renumber.get(old, old))

    new = re.sub(r"\d+", sub, entry.constraint)
    if new == entry.constraint:
        return entry
    return replace(entry, constraint=new)


FRAMING_CATEGORIES = (
    "FlagClobbered",
    "ReadOnlyInputClobbered",
    "UnboundRegisterClobbered",
    "UnboundMemoryWrite",
    "NonWrittenWriteOnlyOutput",
    "UnboundRegisterRead",
    "UnboundMemoryRead",
)


def verify_patch(pr):
    result = check_chunk(pr.patched)
    framing_ok = result.verdict in ("compliant", "issues") and not any(
        i.category in FRAMING_CATEGORIES for i in result.issues
    )
    fully = result.verdict == "compliant"
    try:
        fi = derive_interface(pr.patched)
        satisfiable = enumerate_assignments(fi).satisfiable
    except RicError:
        satisfiable = False
    return {
        "framing_ok": framing_ok,
        "fully_compliant": fully,
        "interface_satisfiable": satisfiable,
    }


def render_diff(original_source, pr):
    span = pr.patched.span
    if span.byte_end <= span.byte_start or span.byte_end > len(original_source):
        raise SpanStale(f"{span.file}: span out of range")
    original = pr.original
    snippet = original_source[span.byte_start : span.byte_end]
    if original is not None:
        from .chunks import extract_chunks

        found, _ = extract_chunks(snippet, span.file)
        if len(found) != 1 or found[0].template != original.template:
            raise SpanStale(f"{span.file}:{span.line}: source changed since scan")
    if not pr.edits:
        return ""
    new_source = (
        original_source[: span.byte_start]
        + render(pr.patched)
        + original_source[span.byte_end :]
    )
    diff = difflib.unified_diff(
        original_source.splitlines(keepends=True),
        new_source.splitlines(keepends=True),
        fromfile=f"a/{span.file}",
        tofile=f"b/{span.file}",
    )
    return "".join(diff)
