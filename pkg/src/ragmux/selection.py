"""Adaptive Cap quotas and final evidence selection.

The candidate pool is first trimmed by per-source quotas (a higher cap for the
router's preferred source, a lower one for everything else), then a selector
ranks the survivors globally and truncates to the final evidence budget.
Selectors: raw retrieval score, reciprocal rank fusion, or LLM-judged
relevance blended with normalized scores.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .llm import WIRE_ERRORS, LlmRequest
from .retrieval import CandidatePool, ScoredCandidate

SELECTORS = ("score", "rrf", "judge")
MODES = ("adaptive", "hard")

_PROMPT_DIR = Path(__file__).parent / "prompts"
JUDGE_TEMPLATE = (_PROMPT_DIR / "judge.txt").read_text(encoding="utf-8")


@dataclass(frozen=True)
class BudgetConfig:
    """Retrieval and selection budgets for one pipeline arm.

    preferred_cap/other_cap are the per-source quotas; caps beyond
    k_per_source are clamped since a source never supplies more than
    k_per_source candidates. mode=hard forces cap application even with
    other_cap=0 (single-source emulation), which the adaptive guard would
    otherwise treat as "no caps".
    """

    k_per_source: int = 5
    keep_k: int = 5
    preferred_cap: int = 0
    other_cap: int = 0
    selector: str = "score"
    rrf_constant: float = 60.0
    mode: str = "adaptive"

    def __post_init__(self) -> None:
        if self.k_per_source < 1:
            raise ValueError("k_per_source must be >= 1")
        if self.keep_k < 1:
            raise ValueError("keep_k must be >= 1")
        if self.preferred_cap < 0:
            raise ValueError("preferred_cap must be >= 0")
        if self.other_cap < 0:
            raise ValueError("other_cap must be >= 0")
        if self.selector not in SELECTORS:
            raise ValueError(f"selector must be one of {', '.join(SELECTORS)}")
        if self.rrf_constant <= 0:
            raise ValueError("rrf_constant must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {', '.join(MODES)}")
        if self.preferred_cap > self.k_per_source:
            object.__setattr__(self, "preferred_cap", self.k_per_source)
        if self.other_cap > self.k_per_source:
            object.__setattr__(self, "other_cap", self.k_per_source)


def budget_from_params(
    top_k_per_source: int = 5,
    keep_k: int = 5,
    selector: str = "score",
    preferred_cap: int = 3,
    other_cap: int = 1,
    mode: str = "adaptive",
    rrf_constant: float = 60.0,
) -> BudgetConfig:
    """Build a BudgetConfig from the demo-facing parameter names.

    Hard mode is a configuration, not separate code: it overrides the caps to
    keep_k/0 so selection drains the routed source alone.
    """
    if mode == "hard":
        preferred_cap, other_cap = keep_k, 0
    return BudgetConfig(
        k_per_source=top_k_per_source,
        keep_k=keep_k,
        preferred_cap=preferred_cap,
        other_cap=other_cap,
        selector=selector,
        rrf_constant=rrf_constant,
        mode=mode,
    )


@dataclass(frozen=True)
class EvidenceSet:
    items: tuple[ScoredCandidate, ...]
    selection_scores: dict[ScoredCandidate, float] = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.items)


def _truncate(pool: CandidatePool, preferred: str, c_pref: int, c_other: int) -> CandidatePool:
    # Quotas act on within-source rank; pool order is already rank order per
    # source, so filtering preserves relative order.
    kept = [
        c
        for c in pool.candidates
        if c.source_rank <= (c_pref if c.source == preferred else c_other)
    ]
    counts = {name: 0 for name in pool.per_source_counts}
    for c in kept:
        counts[c.source] += 1
    return CandidatePool(candidates=kept, per_source_counts=counts, failures=dict(pool.failures))


def apply_adaptive_cap(
    pool: CandidatePool,
    preferred: str | None,
    c_pref: int,
    c_other: int,
) -> CandidatePool:
    """Per-source quota trim; no preference or a zero cap leaves the pool alone."""
    if preferred is None or c_pref == 0 or c_other == 0:
        return pool
    return _truncate(pool, preferred, c_pref, c_other)


def _sort_key(pool: CandidatePool):
    order = pool.source_order()

    def key(pair: tuple[ScoredCandidate, float]):
        candidate, score = pair
        return (-score, order.get(candidate.source, len(order)), candidate.document.id)

    return key


def _rank_and_truncate(
    pool: CandidatePool,
    scored: list[tuple[ScoredCandidate, float]],
    keep_k: int,
    notes: tuple[str, ...] = (),
) -> EvidenceSet:
    ordered = sorted(scored, key=_sort_key(pool))[:keep_k]
    return EvidenceSet(
        items=tuple(candidate for candidate, _ in ordered),
        selection_scores={candidate: score for candidate, score in ordered},
        notes=notes,
    )


def select_score(pool: CandidatePool, keep_k: int) -> EvidenceSet:
    """Global raw-score sort across sources, truncated to keep_k."""
    return _rank_and_truncate(pool, [(c, c.score) for c in pool.candidates], keep_k)


def select_rrf(pool: CandidatePool, keep_k: int, rrf_constant: float = 60.0) -> EvidenceSet:
    """Reciprocal rank fusion: score 1/(c + rank), summed across sources.

    Documents sharing an id across sources fuse into one entry represented by
    the first occurrence in pool order; ranks, not raw scores, drive the
    result, so per-source score scales cannot skew it.
    """
    fused: dict[str, float] = {}
    reps: dict[str, ScoredCandidate] = {}
    for candidate in pool.candidates:
        doc_id = candidate.document.id
        fused[doc_id] = fused.get(doc_id, 0.0) + 1.0 / (rrf_constant + candidate.source_rank)
        reps.setdefault(doc_id, candidate)
    scored = [(reps[doc_id], score) for doc_id, score in fused.items()]
    return _rank_and_truncate(pool, scored, keep_k)


def _normalized_scores(pool: CandidatePool) -> dict[ScoredCandidate, float]:
    if not pool.candidates:
        return {}
    raw = [c.score for c in pool.candidates]
    low, high = min(raw), max(raw)
    if high == low:
        # Degenerate spread: let the judge grade decide alone.
        return {c: 1.0 for c in pool.candidates}
    return {c: (c.score - low) / (high - low) for c in pool.candidates}


def _parse_grade(reply: str) -> int:
    match = re.search(r"\d+", reply)
    if match is None:
        raise ValueError(f"no integer grade in judge reply: {reply!r}")
    return min(10, max(0, int(match.group())))


def select_judge(pool: CandidatePool, query: str, keep_k: int, llm) -> EvidenceSet:
    """LLM relevance grade (0-10 mapped to [0,1]) times min-max-normalized score.

    A failed judge call demotes that candidate to its normalized score alone
    and leaves a note for the trace; the sweep never aborts.
    """
    normalized = _normalized_scores(pool)
    scored: list[tuple[ScoredCandidate, float]] = []
    notes: list[str] = []
    for candidate in pool.candidates:
        prompt = JUDGE_TEMPLATE.format(query=query, passage=candidate.document.text)
        try:
            reply = llm.complete(LlmRequest(system="", user=prompt))
            grade = _parse_grade(reply.text) / 10.0
            scored.append((candidate, grade * normalized[candidate]))
        except (*WIRE_ERRORS, ValueError) as exc:
            notes.append(
                f"judge fallback for {candidate.source}/{candidate.document.id}: {exc}"
            )
            scored.append((candidate, normalized[candidate]))
    return _rank_and_truncate(pool, scored, keep_k, notes=tuple(notes))


def apply_budget(pool: CandidatePool, budget: BudgetConfig, preferred: str | None) -> CandidatePool:
    """The capping step of select_evidence, exposed so traces can record it.

    Hard mode forces the quota trim even though other_cap=0; adaptive mode
    keeps the guard that treats a zero cap as "no caps".
    """
    if budget.mode == "hard" and preferred is not None:
        return _truncate(pool, preferred, budget.preferred_cap, budget.other_cap)
    return apply_adaptive_cap(pool, preferred, budget.preferred_cap, budget.other_cap)


def run_selector(pool: CandidatePool, budget: BudgetConfig, query: str = "", llm=None) -> EvidenceSet:
    """The ranking step of select_evidence, applied to an already-capped pool."""
    if budget.selector == "score":
        return select_score(pool, budget.keep_k)
    if budget.selector == "rrf":
        return select_rrf(pool, budget.keep_k, budget.rrf_constant)
    if llm is None:
        raise ValueError("judge selector requires an LLM handle")
    return select_judge(pool, query, budget.keep_k, llm)


def select_evidence(
    pool: CandidatePool,
    budget: BudgetConfig,
    preferred: str | None,
    query: str = "",
    llm=None,
) -> EvidenceSet:
    """Cap then select: the full per-subquery evidence allocation step."""
    return run_selector(apply_budget(pool, budget, preferred), budget, query, llm)
