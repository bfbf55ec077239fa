"""Command-line driver: check, patch, refine, oracle."""

from __future__ import annotations

import argparse
import json
import sys

from . import patcher, refiner
from .checker import check_chunk
from .chunks import extract_chunks, load_chunk_file, render
from .errors import RicError, SpanStale
from .oracle import TrialConfig, oracle_check
from .report import build_report, chunk_report, render_text


def _parser():
    p = argparse.ArgumentParser(
        prog="ric", description="inline assembly interface compliance"
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("check", "patch", "refine", "oracle"):
        sp = sub.add_parser(name)
        sp.add_argument("--format", choices=("json", "text"), default="json")
        sp.add_argument("--out", default=None)
        sp.add_argument("--in-place", action="store_true", dest="in_place")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--trials", type=int, default=100)
        sp.add_argument("--assignment-cap", type=int, default=256, dest="assignment_cap")
        sp.add_argument("--no-refine-inputs", action="store_true")
        sp.add_argument("--no-refine-clobbers", action="store_true")
        sp.add_argument("--no-refine-memory", action="store_true")
        sp.add_argument("--chunks", action="append", default=[], metavar="FILE.json")
        sp.add_argument("files", nargs="*")
    return p


def _collect(args):
    """Load all chunks, grouped per source file for in-place edits."""
    sources = {}  # path -> source text (None for chunk files)
    per_file = []  # (path, chunk)
    for path in sorted(args.files):
        with open(path, encoding="utf-8") as f:
            text = f.read()
        sources[path] = text
        found, diags = extract_chunks(text, path)
        for d in diags:
            print(f"ric: {path}: {d}", file=sys.stderr)
        for c in found:
            per_file.append((path, c))
    for path in sorted(args.chunks):
        for c in load_chunk_file(path):
            per_file.append((path, c))
    per_file.sort(key=lambda pc: (pc[1].span.file, pc[1].span.line, pc[1].span.column))
    return sources, per_file


def _exit_code(reports):
    verdicts = [r["verdict"] for r in reports]
    has_issues = any(r["issues"] for r in reports) or "error" in verdicts
    if has_issues:
        return 1
    if "out_of_scope" in verdicts:
        return 3
    return 0


def _emit(report, args):
    if args.format == "text":
        text = render_text(report)
    else:
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _cmd_check(args):
    sources, pairs = _collect(args)
    reports = [chunk_report(check_chunk(c)) for _, c in pairs]
    _emit(build_report(reports), args)
    return _exit_code(reports)


def _cmd_patch(args):
    sources, pairs = _collect(args)
    reports = []
    rewrites = {}  # path -> list of (span, replacement)
    for path, chunk in pairs:
        result = check_chunk(chunk)
        extra = {}
        if result.verdict == "issues":
            pr = patcher.synthesize_patches(chunk, result.issues)
            verification = patcher.verify_patch(pr)
            extra["patch"] = {
                "edits": [patcher.edit_to_json(e) for e in pr.edits],
                "unresolved": [
                    {"category": i.category, "location": str(i.location)}
                    for i in pr.unresolved
                ],
                "renumber_map": {str(k): v for k, v in sorted(pr.renumber_map.items())},
                "verification": verification,
                "statement": render(pr.patched),
            }
            src = sources.get(path)
            if src is not None and pr.edits:
                try:
                    extra["patch"]["diff"] = patcher.render_diff(src, pr)
                except SpanStale as e:
                    extra["patch"]["diff_error"] = str(e)
                if args.in_place and verification["interface_satisfiable"]:
                    rewrites.setdefault(path, []).append(
                        (chunk.span, render(pr.patched))
                    )
        reports.append(chunk_report(result, extra))
    if args.in_place:
        _apply_rewrites(sources, rewrites)
    _emit(build_report(reports), args)
    return _exit_code(reports)


def _cmd_refine(args):
    sources, pairs = _collect(args)
    options = refiner.RefineOptions(
        refine_inputs=not args.no_refine_inputs,
        refine_clobbers=not args.no_refine_clobbers,
        refine_memory=not args.no_refine_memory,
    )
    reports = []
    rewrites = {}
    for path, chunk in pairs:
        result = check_chunk(chunk)
        extra = {}
        if result.verdict == "compliant":
            rr = refiner.refine_interface(result, options)
            extra["refinements"] = {
                "edits": [refiner.edit_to_json(e) for e in rr.edits],
                "suggestions": [refiner.edit_to_json(e) for e in rr.suggestions],
                "statement": render(rr.refined) if rr.edits else None,
            }
            if rr.edits and args.in_place and path in sources:
                rewrites.setdefault(path, []).append((chunk.span, render(rr.refined)))
        reports.append(chunk_report(result, extra))
    if args.in_place:
        _apply_rewrites(sources, rewrites)
    _emit(build_report(reports), args)
    return _exit_code(reports)


def _cmd_oracle(args):
    sources, pairs = _collect(args)
    cfg = TrialConfig(
        trials=args.trials, seed=args.seed, assignment_cap=args.assignment_cap
    )
    reports = []
    for path, chunk in pairs:
        result = check_chunk(chunk)
        oracle = {}
        for prop in ("frame_write", "frame_read", "unicity"):
            verdict = oracle_check(chunk, prop, cfg)
            entry = {"verdict": verdict.verdict, "trials": verdict.trials_run}
            if verdict.reason:
                entry["reason"] = verdict.reason
            if verdict.witness:
                entry["witness"] = verdict.witness.to_json()
            oracle[prop] = entry
        reports.append(chunk_report(result, {"oracle": oracle}))
    _emit(build_report(reports), args)
    return _exit_code(reports)


def _apply_rewrites(sources, rewrites):
    for path, edits in rewrites.items():
        text = sources[path]
        for span, replacement in sorted(edits, key=lambda e: -e[0].byte_start):
            text = text[: span.byte_start] + replacement + text[span.byte_end :]
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)


def run(argv=None):
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    handler = {
        "check": _cmd_check,
        "patch": _cmd_patch,
        "refine": _cmd_refine,
        "oracle": _cmd_oracle,
    }[args.command]
    try:
        return handler(args)
    except (RicError, OSError) as e:
        print(f"ric: error: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
