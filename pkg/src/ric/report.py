"""Severity policy, recurrent-error pattern tags, and report building."""

from __future__ import annotations

import os
from dataclasses import dataclass

from .checker import severity_of
from .expr import MMX_REGS, XMM_REGS, Flag, MemoryWhole, Reg, StackSlot, format_loc
from .template import parse_template, uses_push_pop


@dataclass(frozen=True)
class PatternTag:
    tag: str  # 'P1'..'P6'
    rationale: str


PATTERN_NAMES = ("P1", "P2", "P3", "P4", "P5", "P6")


def severity_policy(issue):
    return severity_of(issue.category)


def _loc_name(loc):
    if isinstance(loc, Reg):
        return loc.name
    return None


def classify_pattern(issue, chunk):
    """First matching recurrent-error pattern, or None."""
    loc = issue.location
    name = _loc_name(loc)
    if issue.category == "FlagClobbered":
        return PatternTag("P1", "condition flags clobbered without a cc clobber")
    if name == "ebx" or "ebx" in issue.details.split():
        return PatternTag("P2", "ebx written; reserved for PIC code")
    if name == "esp" or isinstance(loc, StackSlot):
        try:
            if uses_push_pop(parse_template(chunk.template)):
                return PatternTag("P3", "stack pointer manipulated via push/pop")
        except Exception:
            pass
    if (
        issue.category in ("UnboundMemoryWrite", "UnboundMemoryRead")
        or isinstance(loc, MemoryWhole)
    ) and chunk.context.single_chunk_function:
        return PatternTag("P4", "memory effects assumed private to a one-chunk function")
    if name in MMX_REGS:
        return PatternTag("P5", "MMX register affected without a clobber")
    if name in XMM_REGS:
        return PatternTag("P6", "XMM register affected without a clobber")
    return None


def issue_to_json(issue, chunk):
    tag = classify_pattern(issue, chunk)
    return {
        "category": issue.category,
        "severity": severity_policy(issue),
        "pattern": tag.tag if tag else None,
        "location": format_loc(issue.location),
        "point": issue.point,
        "details": issue.details,
    }


def _timings_enabled():
    return os.environ.get("RIC_TIMINGS", "0") == "1"


def chunk_report(result, extra=None):
    chunk = result.chunk
    out = {
        "span": {
            "file": chunk.span.file,
            "line": chunk.span.line,
            "column": chunk.span.column,
        },
        "verdict": result.verdict,
        "issues": [issue_to_json(i, chunk) for i in result.issues],
        # wall-clock values vary run to run and would break byte-level
        # report reproducibility; opt in via RIC_TIMINGS=1
        "timings": (
            {k: round(v, 3) for k, v in result.timings.items()}
            if _timings_enabled()
            else None
        ),
    }
    if result.details:
        out["details"] = result.details
    if extra:
        out.update(extra)
    return out


def build_summary(chunk_reports):
    by_category = {}
    by_severity = {"benign": 0, "serious": 0}
    by_pattern = {}
    totals = {"compliant": 0, "benign_only": 0, "serious": 0, "out_of_scope": 0, "error": 0}
    for rep in chunk_reports:
        issues = rep["issues"]
        for i in issues:
            by_category[i["category"]] = by_category.get(i["category"], 0) + 1
            by_severity[i["severity"]] += 1
            if i["pattern"]:
                by_pattern[i["pattern"]] = by_pattern.get(i["pattern"], 0) + 1
        if rep["verdict"] == "compliant":
            totals["compliant"] += 1
        elif rep["verdict"] == "out_of_scope":
            totals["out_of_scope"] += 1
        elif rep["verdict"] == "error":
            totals["error"] += 1
        elif all(i["severity"] == "benign" for i in issues):
            totals["benign_only"] += 1
        else:
            totals["serious"] += 1
    return {
        "chunks": len(chunk_reports),
        "by_category": dict(sorted(by_category.items())),
        "by_severity": by_severity,
        "by_pattern": dict(sorted(by_pattern.items())),
        "totals": totals,
    }


def build_report(chunk_reports):
    return {
        "schema": 1,
        "chunks": chunk_reports,
        "summary": build_summary(chunk_reports),
    }


# ---------------------------------------------------------------------------
# Text view (derived from the JSON structure)

_COLORS = {"serious": "\x1b[31m", "benign": "\x1b[33m", "ok": "\x1b[32m", "reset": "\x1b[0m"}


def _color_enabled():
    v = os.environ.get("RIC_COLOR")
    if v == "1":
        return True
    return False


def render_text(report):
    color = _color_enabled()

    def paint(text, kind):
        if not color:
            return text
        return f"{_COLORS[kind]}{text}{_COLORS['reset']}"

    lines = []
    for rep in report["chunks"]:
        span = rep["span"]
        head = f"{span['file']}:{span['line']}: {rep['verdict']}"
        if rep["verdict"] == "compliant":
            head = paint(head, "ok")
        lines.append(head)
        for i in rep["issues"]:
            tag = f" [{i['pattern']}]" if i["pattern"] else ""
            line = (
                f"  {i['severity']}: {i['category']} at {i['location']}"
                f" (point {i['point']}){tag} {i['details']}"
            )
            lines.append(paint(line, i["severity"]))
        if rep.get("details"):
            lines.append(f"  note: {rep['details']}")
        for key in ("patch", "refinements", "oracle"):
            if rep.get(key):
                lines.append(f"  {key}: {rep[key]}")
    s = report["summary"]
    lines.append(
        "summary: {chunks} chunks, {c} compliant, {b} benign-only, {s} serious,"
        " {o} out of scope".format(
            chunks=s["chunks"],
            c=s["totals"]["compliant"],
            b=s["totals"]["benign_only"],
            s=s["totals"]["serious"],
            o=s["totals"]["out_of_scope"],
        )
    )
    return "\n".join(lines) + "\n"
