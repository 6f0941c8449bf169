from __future__ import annotations

import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
DATA_DIR = TESTS_DIR / "data"

sys.path.insert(0, str(TESTS_DIR))


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return DATA_DIR / "corpus"


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return DATA_DIR / "golden"


@pytest.fixture(scope="session")
def corpus_manifest(corpus_dir):
    from sidtrack.manifest import load_manifest

    return load_manifest(corpus_dir / "manifest.jsonl")


@pytest.fixture(scope="session")
def corpus_scores(corpus_dir, corpus_manifest):
    from sidtrack.scoring import load_scores

    with open(corpus_dir / "scores.tsv", "r", encoding="utf-8") as fh:
        return load_scores(fh, known_ids={r.id for r in corpus_manifest.records})


@pytest.fixture(scope="session")
def corpus_hashes(corpus_dir):
    from sidtrack.simindex import load_hash_cache

    with open(corpus_dir / "hashes.tsv", "r", encoding="utf-8") as fh:
        return load_hash_cache(fh)
