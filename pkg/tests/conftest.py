import json
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus" / "corpus.json"
LABELS = ROOT / "corpus" / "labels.json"


@pytest.fixture(scope="session")
def corpus_chunks():
    from ric.chunks import load_chunk_file

    return load_chunk_file(str(CORPUS))


@pytest.fixture(scope="session")
def corpus_labels():
    with open(LABELS, encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture(scope="session")
def corpus_by_id(corpus_chunks):
    return {c.context.file: c for c in corpus_chunks}


@pytest.fixture(scope="session")
def corpus_results(corpus_chunks):
    from ric.checker import check_chunk

    return {c.context.file: check_chunk(c) for c in corpus_chunks}


def chunks_with_tag(by_id, labels, tag):
    return [by_id[cid] for cid, lab in labels.items() if tag in lab["tags"]]
