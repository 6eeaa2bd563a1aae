"""Shared fixtures: registries, candidate pools, and scripted LLM helpers."""

from __future__ import annotations

import sys

import pytest

from ragmux.corpus import Document, SourceRegistry
from ragmux.llm import ScriptedLlm
from ragmux.retrieval import CandidatePool, ScoredCandidate


def make_registry(sources: dict[str, list[str]], profiles: dict[str, str] | None = None) -> SourceRegistry:
    """Registry from {source: [doc texts]}; ids are <source>-<i>."""
    registry = SourceRegistry()
    profiles = profiles or {}
    for name, texts in sources.items():
        documents = [
            Document(id=f"{name}-{i}", source=name, text=text)
            for i, text in enumerate(texts)
        ]
        registry.register(name, profiles.get(name, f"{name} documents"), documents)
    return registry


def make_pool(
    spec: dict[str, list[float]],
    ids: dict[str, list[str]] | None = None,
    texts: dict[str, list[str]] | None = None,
) -> CandidatePool:
    """Pool from {source: [scores desc]}; optional explicit ids/texts per source."""
    candidates = []
    counts = {}
    for source, scores in spec.items():
        counts[source] = len(scores)
        for position, score in enumerate(scores):
            doc_id = ids[source][position] if ids else f"{source}-{position}"
            text = texts[source][position] if texts else f"text of {doc_id}"
            candidates.append(
                ScoredCandidate(
                    document=Document(id=doc_id, source=source, text=text),
                    score=score,
                    source=source,
                    source_rank=position + 1,
                )
            )
    return CandidatePool(candidates=candidates, per_source_counts=counts)


@pytest.fixture
def two_source_registry() -> SourceRegistry:
    return make_registry(
        {
            "trivia": [
                "cats purr when content",
                "dogs bark at strangers",
                "parrots mimic human speech",
                "goldfish have short memories",
            ],
            "science": [
                "neural networks learn from data",
                "gravity bends light in relativity",
                "enzymes catalyze chemical reactions",
                "neurons fire electrical impulses",
            ],
        }
    )


def scripted(rules=(), queue=()) -> ScriptedLlm:
    return ScriptedLlm(rules=rules, queue=queue)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion, when that suite ran."""
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", []) if module else []
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
