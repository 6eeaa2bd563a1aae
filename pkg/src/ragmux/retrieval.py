"""Parallel multi-source retrieval into a unified candidate pool.

Every registered source is queried for its top-k results; candidates are
annotated with their source name and 1-based within-source rank and merged in
registry order, so the pool is a deterministic sequence regardless of task
completion order. A failing source contributes zero candidates and a failure
note instead of aborting the round.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .corpus import Document, SourceRegistry


@dataclass(frozen=True)
class ScoredCandidate:
    document: Document
    score: float
    source: str
    source_rank: int


@dataclass
class CandidatePool:
    candidates: list[ScoredCandidate]
    per_source_counts: dict[str, int]
    failures: dict[str, str] = field(default_factory=dict)

    def source_order(self) -> dict[str, int]:
        """Registry-order position of each source seen in this round."""
        return {name: position for position, name in enumerate(self.per_source_counts)}

    def by_source(self, name: str) -> list[ScoredCandidate]:
        return [c for c in self.candidates if c.source == name]


def _lookup_one(registry: SourceRegistry, name: str, query: str, k: int) -> list[ScoredCandidate]:
    results = registry.index_for(name).lookup(query, k)
    return [
        ScoredCandidate(document=doc, score=score, source=name, source_rank=rank)
        for rank, (doc, score) in enumerate(results, start=1)
    ]


def retrieve_multi_source(
    query: str,
    registry: SourceRegistry,
    k_per_source: int,
    parallel: bool = True,
) -> CandidatePool:
    """Fan the query out to every source and merge annotated top-k results.

    The merged pool lists sources in registry order and candidates within a
    source in rank order; the concurrent path reduces futures in that same
    order, so it returns the identical sequence as sequential iteration.
    """
    if len(registry) == 0:
        raise ValueError("registry has no sources")
    if k_per_source < 1:
        raise ValueError("k_per_source must be >= 1")

    names = registry.names()
    results: dict[str, list[ScoredCandidate]] = {}
    failures: dict[str, str] = {}

    if parallel and len(names) > 1:
        with ThreadPoolExecutor(max_workers=len(names)) as pool:
            futures = {
                name: pool.submit(_lookup_one, registry, name, query, k_per_source)
                for name in names
            }
            for name in names:
                try:
                    results[name] = futures[name].result()
                except Exception as exc:
                    failures[name] = f"{type(exc).__name__}: {exc}"
    else:
        for name in names:
            try:
                results[name] = _lookup_one(registry, name, query, k_per_source)
            except Exception as exc:
                failures[name] = f"{type(exc).__name__}: {exc}"

    candidates: list[ScoredCandidate] = []
    per_source_counts: dict[str, int] = {}
    for name in names:
        source_candidates = results.get(name, [])
        candidates.extend(source_candidates)
        per_source_counts[name] = len(source_candidates)
    return CandidatePool(
        candidates=candidates,
        per_source_counts=per_source_counts,
        failures=failures,
    )
