"""Compliance checker: findings, the two precision optimizations, and
corpus-label agreement."""

from ric.checker import CheckOptions, check_chunk
from ric.chunks import load_chunk_records
from ric.constraints import derive_interface
from ric.expr import Reg, Token
from ric.report import classify_pattern, severity_policy

from conftest import chunks_with_tag


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


def findings(result):
    out = []
    for i in result.issues:
        tag = classify_pattern(i, result.chunk)
        out.append((i.category, severity_policy(i), tag.tag if tag else None))
    return sorted(out, key=lambda t: (t[0], t[1], t[2] or ""))


# ---------------------------------------------------------------------------
# Motivating example


def test_motivating_example_findings(corpus_by_id):
    result = check_chunk(corpus_by_id["paper/cas8_x86.c"])
    assert result.verdict == "issues"
    cats = sorted(i.category for i in result.issues)
    assert cats == ["FlagClobbered", "ReadOnlyInputClobbered", "Unicity"]
    roc = next(i for i in result.issues if i.category == "ReadOnlyInputClobbered")
    assert isinstance(roc.location, Reg) and roc.location.name == "edx"
    uni = next(i for i in result.issues if i.category == "Unicity")
    assert "ebx" in f"{uni.location} {uni.details}"
    # the saved/restored scratch registers raise no frame-write alarm
    for i in result.issues:
        if i.category in ("UnboundRegisterClobbered", "ReadOnlyInputClobbered"):
            assert getattr(i.location, "name", None) not in ("ebx", "esi", "edi")


def test_motivating_example_interface(corpus_by_id):
    fi = derive_interface(corpus_by_id["paper/cas8_x86.c"])
    assert fi.b_o == frozenset({0, 1})
    assert fi.b_i == frozenset({2, 3, 5, 6})
    assert fi.unified == {4: 1}
    assert fi.s_c == frozenset()
    assert fi.f is False
    assert fi.fixed == {1: "eax", 3: "edx", 4: "eax", 5: "ecx", 6: "edi"}


# ---------------------------------------------------------------------------
# Corpus-label agreement (taxonomy + severity + patterns)


def test_corpus_labels_match(corpus_chunks, corpus_labels):
    for c in corpus_chunks:
        label = corpus_labels[c.context.file]
        result = check_chunk(c)
        assert result.verdict == label["verdict"], c.context.file
        want = sorted(
            ((i["category"], i["severity"], i["pattern"]) for i in label["issues"]),
            key=lambda t: (t[0], t[1], t[2] or ""),
        )
        assert findings(result) == want, c.context.file


def test_corpus_covers_all_categories_and_patterns(corpus_labels):
    cats = set()
    pats = set()
    for label in corpus_labels.values():
        for i in label["issues"]:
            cats.add(i["category"])
            if i["pattern"]:
                pats.add(i["pattern"])
    assert cats == {
        "FlagClobbered",
        "ReadOnlyInputClobbered",
        "UnboundRegisterClobbered",
        "UnboundMemoryWrite",
        "UnboundMemoryRead",
        "NonWrittenWriteOnlyOutput",
        "UnboundRegisterRead",
        "Unicity",
    }
    assert pats == {"P1", "P2", "P3", "P4", "P5", "P6"}


def test_severity_is_benign_iff_flags(corpus_chunks):
    for c in corpus_chunks:
        for i in check_chunk(c).issues:
            assert (severity_policy(i) == "benign") == (i.category == "FlagClobbered")


# ---------------------------------------------------------------------------
# Optimization ablation


NO_PROP = CheckOptions(expression_propagation=False)
NO_BITS = CheckOptions(bit_liveness=False)


def test_restore_idioms_need_propagation(corpus_by_id, corpus_labels):
    suite = chunks_with_tag(corpus_by_id, corpus_labels, "restore-idiom")
    assert len(suite) >= 5
    for c in suite:
        assert check_chunk(c).verdict == "compliant", c.context.file
        coarse = check_chunk(c, NO_PROP)
        frame_write_cats = {"ReadOnlyInputClobbered", "UnboundRegisterClobbered"}
        assert any(i.category in frame_write_cats for i in coarse.issues), c.context.file


def test_subregister_writes_need_bit_liveness(corpus_by_id, corpus_labels):
    suite = chunks_with_tag(corpus_by_id, corpus_labels, "subregister")
    assert len(suite) >= 5
    for c in suite:
        assert check_chunk(c).verdict == "compliant", c.context.file
        coarse = check_chunk(c, NO_BITS)
        frame_read_cats = {"UnboundRegisterRead", "UnboundMemoryRead"}
        assert any(i.category in frame_read_cats for i in coarse.issues), c.context.file


def test_optimizations_only_remove_alarms(corpus_chunks):
    """Disabling either optimization never removes a finding."""
    for c in corpus_chunks:
        precise = check_chunk(c)
        if precise.verdict in ("error", "out_of_scope"):
            continue
        precise_keys = {(i.category, str(i.location)) for i in precise.issues}
        for opts in (NO_PROP, NO_BITS):
            coarse = check_chunk(c, opts)
            coarse_keys = {(i.category, str(i.location)) for i in coarse.issues}
            assert precise_keys <= coarse_keys, c.context.file


# ---------------------------------------------------------------------------
# Specific behaviors


def test_issue_dedup():
    # edx written at two points: one finding
    c = chunk("movl %0, %%edx\naddl %0, %%edx", [], [("r", "x", 4)], ["cc"])
    result = check_chunk(c)
    locs = [
        (i.category, str(i.location))
        for i in result.issues
        if i.category == "UnboundRegisterClobbered"
    ]
    assert len(locs) == 1


def test_stack_scratch_exempt_when_esp_restored():
    c = chunk("pushl %1\npopl %0", [("=r", "y", 4)], [("r", "x", 4)])
    assert check_chunk(c).verdict == "compliant"


def test_push_without_pop_flags_esp():
    c = chunk("pushl %0", [], [("r", "x", 4)])
    result = check_chunk(c)
    assert result.verdict == "issues"
    assert any(
        i.category == "UnboundRegisterClobbered"
        and getattr(i.location, "name", "") == "esp"
        for i in result.issues
    )


def test_anchored_output_written_through_pointer():
    c = chunk(
        "movl %1, (%2)\nmovl %1, 4(%2)",
        [("=m", "*(dst)", 8)],
        [("r", "v", 4), ("r", "dst", 4)],
    )
    assert check_chunk(c).verdict == "compliant"


def test_anchored_output_not_covered_still_flags():
    c = chunk(
        "movl %1, 4(%2)",
        [("=m", "*(dst)", 4)],
        [("r", "v", 4), ("r", "dst", 4)],
    )
    result = check_chunk(c)
    cats = {i.category for i in result.issues}
    assert "NonWrittenWriteOnlyOutput" in cats
    assert "UnboundMemoryWrite" in cats  # the store lands outside the entry


def test_anchored_input_allows_loads():
    c = chunk(
        "movl (%1), %0",
        [("=r", "v", 4)],
        [("r", "p", 4), ("m", "*(p)", 4)],
    )
    assert check_chunk(c).verdict == "compliant"


def test_benign_only_is_still_issues_verdict():
    c = chunk("addl %1, %0", [("+r", "x", 4)], [("r", "y", 4)])
    result = check_chunk(c)
    assert result.verdict == "issues"
    assert all(i.category == "FlagClobbered" for i in result.issues)


def test_error_verdict_on_bad_token_reference():
    c = chunk("movl %5, %0", [("=r", "y", 4)])
    result = check_chunk(c)
    assert result.verdict == "error"
    assert result.details


def test_out_of_scope_verdict(corpus_by_id):
    result = check_chunk(corpus_by_id["oos/fld.c"])
    assert result.verdict == "out_of_scope"
    assert result.issues == []


def test_checker_is_deterministic(corpus_chunks):
    for c in corpus_chunks:
        a = check_chunk(c)
        b = check_chunk(c)
        assert a.verdict == b.verdict
        assert [
            (i.category, str(i.location), i.point, i.details) for i in a.issues
        ] == [(i.category, str(i.location), i.point, i.details) for i in b.issues]


def test_write_only_output_read_at_entry():
    c = chunk("addl %1, %0", [("=r", "y", 4)], [("r", "x", 4)], ["cc"])
    result = check_chunk(c)
    assert any(
        i.category == "UnboundRegisterRead" and isinstance(i.location, Token)
        for i in result.issues
    )
