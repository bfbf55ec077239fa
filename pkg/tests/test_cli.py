"""Command-line driver: exit codes, output formats, in-place rewriting, and
report reproducibility."""

import json

from ric.cli import run

FAULTY_SRC = (
    "int f(int x, int y) {\n"
    '  asm ("addl %1, %0" : "+r" (x) : "r" (y));\n'
    "  return x;\n"
    "}\n"
)
CLEAN_SRC = (
    "int g(int x, int y) {\n"
    '  asm ("movl %1, %0" : "=r" (x) : "r" (y));\n'
    "  return x;\n"
    "}\n"
)
OOS_SRC = (
    "void h(double *p) {\n"
    '  asm ("fldl (%0)" : : "r" (p) : "memory");\n'
    "}\n"
)
REFINABLE_SRC = (
    "int r(int x, int y, int dead) {\n"
    '  asm ("movl %1, %0" : "=r" (x) : "r" (y), "r" (dead));\n'
    "  return x;\n"
    "}\n"
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_json(args, tmp_path):
    out = tmp_path / "report.json"
    code = run(args + ["--out", str(out)])
    return code, json.loads(out.read_text())


# ---------------------------------------------------------------------------
# Exit codes


def test_exit_zero_on_compliant(tmp_path):
    code, rep = run_json(["check", write(tmp_path, "g.c", CLEAN_SRC)], tmp_path)
    assert code == 0
    assert rep["chunks"][0]["verdict"] == "compliant"


def test_exit_one_on_issues(tmp_path):
    code, rep = run_json(["check", write(tmp_path, "f.c", FAULTY_SRC)], tmp_path)
    assert code == 1
    assert rep["chunks"][0]["issues"]


def test_exit_three_on_out_of_scope_only(tmp_path):
    code, rep = run_json(["check", write(tmp_path, "h.c", OOS_SRC)], tmp_path)
    assert code == 3
    assert rep["chunks"][0]["verdict"] == "out_of_scope"


def test_exit_two_on_bad_usage(tmp_path, capsys):
    assert run(["check", str(tmp_path / "missing.c")]) == 2
    assert run(["frobnicate"]) == 2
    capsys.readouterr()


# ---------------------------------------------------------------------------
# Formats and outputs


def test_json_schema_and_stdout(tmp_path, capsys):
    code = run(["check", write(tmp_path, "g.c", CLEAN_SRC)])
    out = capsys.readouterr().out
    rep = json.loads(out)
    assert code == 0 and rep["schema"] == 1
    assert {"chunks", "schema", "summary"} == set(rep)


def test_text_format(tmp_path, capsys):
    run(["check", "--format", "text", write(tmp_path, "f.c", FAULTY_SRC)])
    out = capsys.readouterr().out
    assert "f.c:2: issues" in out
    assert out.rstrip().splitlines()[-1].startswith("summary:")


def test_chunk_file_input(tmp_path):
    code, rep = run_json(["check", "--chunks", "corpus/corpus.json"], tmp_path)
    assert code == 1  # the corpus includes faulty chunks on purpose
    assert rep["summary"]["chunks"] >= 60


# ---------------------------------------------------------------------------
# Patch / refine round trips


def test_patch_reports_edits_and_diff(tmp_path):
    path = write(tmp_path, "f.c", FAULTY_SRC)
    code, rep = run_json(["patch", path], tmp_path)
    assert code == 1
    patch = rep["chunks"][0]["patch"]
    assert patch["verification"]["fully_compliant"] is True
    assert patch["unresolved"] == []
    assert patch["diff"].startswith("--- a/")


def test_patch_in_place_round_trip(tmp_path):
    path = write(tmp_path, "f.c", FAULTY_SRC)
    code, _ = run_json(["patch", "--in-place", path], tmp_path)
    assert code == 1  # reports the pre-patch findings
    patched = open(path).read()
    assert '"cc"' in patched
    code, rep = run_json(["check", path], tmp_path)
    assert code == 0
    assert rep["chunks"][0]["verdict"] == "compliant"


def test_refine_in_place_round_trip(tmp_path):
    path = write(tmp_path, "r.c", REFINABLE_SRC)
    code, rep = run_json(["refine", "--in-place", path], tmp_path)
    assert code == 0
    edits = rep["chunks"][0]["refinements"]["edits"]
    assert any(e["edit"] == "DropInput" for e in edits)
    refined = open(path).read()
    assert "dead" not in refined.split("asm")[1].split(";")[0]
    code, rep = run_json(["check", path], tmp_path)
    assert code == 0 and rep["chunks"][0]["verdict"] == "compliant"


def test_refine_flags_can_disable_phases(tmp_path):
    path = write(tmp_path, "r.c", REFINABLE_SRC)
    code, rep = run_json(["refine", "--no-refine-inputs", path], tmp_path)
    assert code == 0
    assert rep["chunks"][0]["refinements"]["edits"] == []


def test_oracle_command(tmp_path):
    code, rep = run_json(
        ["oracle", "--trials", "50", write(tmp_path, "f.c", FAULTY_SRC)], tmp_path
    )
    assert code == 1
    oracle = rep["chunks"][0]["oracle"]
    assert oracle["frame_write"]["verdict"] == "violation"
    assert "witness" in oracle["frame_write"]


# ---------------------------------------------------------------------------
# Reproducibility


def test_reports_are_byte_identical_across_runs(tmp_path, monkeypatch):
    monkeypatch.delenv("RIC_TIMINGS", raising=False)
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    assert run(["check", "--chunks", "corpus/corpus.json", "--out", str(a)]) == 1
    assert run(["check", "--chunks", "corpus/corpus.json", "--out", str(b)]) == 1
    assert a.read_bytes() == b.read_bytes()
