"""Report structure: per-issue JSON, summary buckets, and the text view."""

from ric.checker import check_chunk
from ric.report import (
    build_report,
    build_summary,
    chunk_report,
    classify_pattern,
    issue_to_json,
    render_text,
    severity_policy,
)


def report_for(c, extra=None):
    return chunk_report(check_chunk(c), extra)


def test_issue_json_fields(corpus_by_id):
    c = corpus_by_id["paper/cas8_x86.c"]
    result = check_chunk(c)
    flag = next(i for i in result.issues if i.category == "FlagClobbered")
    j = issue_to_json(flag, c)
    assert j["severity"] == "benign" and j["pattern"] == "P1"
    assert set(j) == {"category", "severity", "pattern", "location", "point", "details"}


def test_pattern_tags_match_labels(corpus_chunks, corpus_labels):
    for c in corpus_chunks:
        want = sorted(
            (i["category"], i["pattern"])
            for i in corpus_labels[c.context.file]["issues"]
        )
        got = []
        for issue in check_chunk(c).issues:
            tag = classify_pattern(issue, c)
            got.append((issue.category, tag.tag if tag else None))
        assert sorted(got) == want, c.context.file


def test_chunk_report_has_no_timings_by_default(corpus_by_id, monkeypatch):
    monkeypatch.delenv("RIC_TIMINGS", raising=False)
    rep = report_for(corpus_by_id["ok/nop.c"])
    assert rep["timings"] is None
    monkeypatch.setenv("RIC_TIMINGS", "1")
    rep = report_for(corpus_by_id["ok/nop.c"])
    assert isinstance(rep["timings"], dict) and rep["timings"]


def test_summary_buckets(corpus_chunks, corpus_labels):
    reps = [report_for(c) for c in corpus_chunks]
    s = build_summary(reps)
    assert s["chunks"] == len(corpus_chunks)
    verdicts = [lab["verdict"] for lab in corpus_labels.values()]
    assert s["totals"]["compliant"] == verdicts.count("compliant")
    assert s["totals"]["out_of_scope"] == verdicts.count("out_of_scope")
    assert s["totals"]["error"] == verdicts.count("error")
    benign_only = sum(
        1
        for lab in corpus_labels.values()
        if lab["verdict"] == "issues"
        and all(i["severity"] == "benign" for i in lab["issues"])
    )
    assert s["totals"]["benign_only"] == benign_only
    assert (
        s["totals"]["serious"]
        == verdicts.count("issues") - benign_only
    )
    assert s["by_severity"]["serious"] > 0 and s["by_severity"]["benign"] > 0
    assert set(s["by_pattern"]) == {"P1", "P2", "P3", "P4", "P5", "P6"}


def test_report_envelope(corpus_chunks):
    rep = build_report([report_for(c) for c in corpus_chunks[:3]])
    assert rep["schema"] == 1
    assert len(rep["chunks"]) == 3
    assert rep["summary"]["chunks"] == 3


def test_render_text_plain(corpus_by_id, monkeypatch):
    monkeypatch.delenv("RIC_COLOR", raising=False)
    rep = build_report(
        [report_for(corpus_by_id["paper/cas8_x86.c"]), report_for(corpus_by_id["ok/nop.c"])]
    )
    text = render_text(rep)
    assert "\x1b[" not in text
    assert "paper/cas8_x86.c:1: issues" in text
    assert "ok/nop.c:1: compliant" in text
    assert "serious: ReadOnlyInputClobbered" in text
    assert text.rstrip().splitlines()[-1].startswith("summary: 2 chunks, 1 compliant")


def test_render_text_color(corpus_by_id, monkeypatch):
    monkeypatch.setenv("RIC_COLOR", "1")
    rep = build_report([report_for(corpus_by_id["paper/cas8_x86.c"])])
    text = render_text(rep)
    assert "\x1b[31m" in text  # serious issues painted red


def test_severity_policy_consistency(corpus_chunks):
    for c in corpus_chunks:
        for i in check_chunk(c).issues:
            assert severity_policy(i) in ("benign", "serious")
