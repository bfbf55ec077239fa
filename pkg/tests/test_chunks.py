"""Extraction: scanning C text, parsing statements, chunk files, rendering."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ric.chunks import (
    extract_chunks,
    load_chunk_records,
    parse_asm_statement,
    render,
    scan_c_source,
)
from ric.errors import MalformedInterface, SchemaViolation


def scan(text):
    return scan_c_source(text, "t.c")[0]


def test_minimal_statement():
    stmts = scan('__asm__ volatile ("nop");')
    assert len(stmts) == 1
    assert stmts[0].body == '"nop"'
    assert "volatile" in stmts[0].qualifiers


def test_comment_and_string_exclusion():
    assert scan('/* asm("x") */ char*s="asm(\\"y\\")";') == []


def test_line_comment_exclusion():
    assert scan('// asm("x")\nint y;') == []


def test_unterminated_statement_recovers():
    stmts, diags = scan_c_source('asm ("a"  \n asm ("b");', "t.c")
    assert len(diags) == 1
    assert len(stmts) == 1 and stmts[0].body == '"b"'


def test_parse_one_entry():
    chunks, diags = extract_chunks('asm ("incl %0" : "+r" (x));', "t.c")
    assert not diags
    (c,) = chunks
    assert c.template == "incl %0"
    assert [e.constraint for e in c.outputs] == ["+r"]
    assert c.inputs == () and c.clobbers == ()


def test_parse_empty_template_clobbers():
    chunks, _ = extract_chunks('asm ("" : : : "cc");', "t.c")
    (c,) = chunks
    assert c.template == "" and c.clobbers == ("cc",)


def test_string_concatenation_and_escapes():
    chunks, _ = extract_chunks('asm ("movl %1, %0\\n" "nop" : "=r"(y) : "r"(x));')
    (c,) = chunks
    assert c.template == "movl %1, %0\nnop"


def test_named_entries_and_size_notes():
    src = 'asm ("movb %[src], %[dst]" : [dst] "=q" (y /* size:1 */) : [src] "q" (x /* size:1 */));'
    chunks, diags = extract_chunks(src)
    assert not diags
    (c,) = chunks
    assert c.outputs[0].name == "dst" and c.outputs[0].size_bytes == 1
    assert c.inputs[0].name == "src" and c.inputs[0].size_bytes == 1


def test_positions_dense(corpus_chunks):
    for c in corpus_chunks:
        assert [e.position for e in c.entries] == list(range(len(c.entries)))


def test_malformed_entry_is_diagnostic_not_crash():
    chunks, diags = extract_chunks('asm ("nop" : "=r" x);')
    assert chunks == [] and len(diags) == 1
    assert isinstance(diags[0], MalformedInterface)


def test_schema_rejects_unknown_field():
    with pytest.raises(SchemaViolation):
        load_chunk_records([{"template": "nop", "bogus": 1}])


def test_schema_rejects_bad_size():
    with pytest.raises(SchemaViolation):
        load_chunk_records(
            [{"template": "nop", "outputs": [{"constraint": "=r", "size_bytes": 3}]}]
        )


def test_schema_minimal_record():
    (c,) = load_chunk_records([{"template": "nop"}])
    assert c.template == "nop" and c.entries == ()


def test_corpus_file_is_valid_json_and_loads(corpus_chunks, corpus_labels):
    assert len(corpus_chunks) >= 60
    ids = [c.context.file for c in corpus_chunks]
    assert len(set(ids)) == len(ids)
    assert set(ids) == set(corpus_labels)


def test_render_round_trip(corpus_chunks):
    for c in corpus_chunks:
        text = render(c)
        stmts, diags = scan_c_source(text + ";", "rt.c")
        assert not diags and len(stmts) == 1
        # sizes are side metadata; compare the parse-visible structure
        c2 = parse_asm_statement(stmts[0].body, stmts[0].span, stmts[0].qualifiers)
        assert c2.template == c.template
        assert [(e.constraint, e.expr_text) for e in c2.entries] == [
            (e.constraint, e.expr_text) for e in c.entries
        ]
        assert c2.clobbers == c.clobbers


_FILLERS = st.sampled_from(
    [
        "/* asm(\"ghost\") */",
        "// asm(\"ghost\")\n",
        'const char *s = "asm(\\"ghost\\")";',
        "int x;",
        "\n\n",
        "char c = ')';",
    ]
)


@settings(max_examples=60, deadline=None)
@given(st.lists(_FILLERS, max_size=6), st.lists(_FILLERS, max_size=6))
def test_scanner_injection_property(prefix, suffix):
    """Comments/strings around a statement never change what is found."""
    stmt = 'asm ("incl %0" : "+r" (x));'
    text = "".join(prefix) + stmt + "".join(suffix)
    stmts, diags = scan_c_source(text, "t.c")
    assert not diags
    assert len(stmts) == 1
    assert stmts[0].body == '"incl %0" : "+r" (x)'
    span = stmts[0].span
    assert text[span.byte_start : span.byte_end].startswith("asm")


def test_corpus_json_matches_loader(corpus_chunks):
    with open("corpus/corpus.json", encoding="utf-8") as f:
        raw = json.load(f)
    assert len(raw) == len(corpus_chunks)
