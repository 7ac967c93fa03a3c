"""Shared fixtures and the acceptance-suite result printer."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from critic_loop.codebook import Codebook, CodeDefinition, load_default_codebook
from critic_loop.corpus import Corpus, Passage


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    marker = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] {marker}: {name}", flush=True)


@pytest.fixture(scope="session")
def asf_codebook() -> Codebook:
    return load_default_codebook()


@pytest.fixture
def small_codebook() -> Codebook:
    codes = (
        CodeDefinition(
            code_id="alpha",
            title="Alpha",
            definition="Mentions the alpha topic as a claim about the project.",
            factors=("Direct statements about alpha", "Comparisons framed around alpha"),
            exclusions=("Do NOT apply when alpha is only quoted from a policy document.",),
            critic_addendum="A bare mention of the word alpha is not a claim about it.",
        ),
        CodeDefinition(
            code_id="beta",
            title="Beta",
            definition="Raises the beta concern in the discussion.",
            factors=("Any beta-related worry",),
        ),
        CodeDefinition(
            code_id="gamma",
            title="Gamma",
            definition="Notes gamma outcomes, positive or negative.",
        ),
    )
    return Codebook(version="test-v1", codes=codes)


def make_corpus(n: int, name: str = "synthetic", body_len: int = 40) -> Corpus:
    passages = tuple(
        Passage(
            id=f"p{i:03d}",
            body=(f"Synthetic passage {i:03d} discussing the project. " * 3)[:body_len].ljust(body_len, "x"),
            source=f"thread-{i % 7}",
        )
        for i in range(n)
    )
    return Corpus(name=name, passages=passages)


@pytest.fixture
def corpus_12() -> Corpus:
    return make_corpus(12)


def write_jsonl(path: Path, records: list[dict]) -> Path:
    path.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in records), encoding="utf-8"
    )
    return path
