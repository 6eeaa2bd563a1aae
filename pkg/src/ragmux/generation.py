"""Answer synthesis and the reflection loop.

For each sub-query: bind earlier answers, optionally route, retrieve from all
sources, cap, select, generate. A reply flagged insufficient re-runs the whole
chain with the failed routing preference recorded, up to max_reflexion_times
retries; the final attempt's answer is always returned (fallback when still
insufficient). Multi-subquery runs end with a fusion call.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import SourceRegistry
from .llm import WIRE_ERRORS, LlmRequest, TrackedLlm
from .planner import (
    AnswerEnvironment,
    Subquery,
    decompose,
    single_plan,
    substitute_variables,
)
from .retrieval import retrieve_multi_source
from .router import FailHistory, RoutingDecision, route, should_route
from .selection import BudgetConfig, EvidenceSet, apply_budget, run_selector

_PROMPT_DIR = Path(__file__).parent / "prompts"
SYNTHESIS_TEMPLATE = (_PROMPT_DIR / "synthesis.txt").read_text(encoding="utf-8")
FUSION_TEMPLATE = (_PROMPT_DIR / "fusion.txt").read_text(encoding="utf-8")

_LABEL_RE = re.compile(r"^\s*(ANSWER|REASONING|SUFFICIENT)\s*:\s*(.*)$", re.IGNORECASE)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one arm needs beyond the corpus: budgets plus pipeline toggles."""

    budget: BudgetConfig = field(default_factory=BudgetConfig)
    decompose: bool = True
    use_reflection: bool = True
    max_reflexion_times: int = 2

    def __post_init__(self) -> None:
        if self.max_reflexion_times < 0:
            raise ValueError("max_reflexion_times must be >= 0")


@dataclass
class AttemptTrace:
    attempt: int
    routing: RoutingDecision | None
    pool_counts: dict[str, int]
    capped_counts: dict[str, int]
    retrieval_failures: dict[str, str]
    evidence: list[dict]
    answer: str
    sufficient: bool
    notes: list[str]

    def to_dict(self) -> dict:
        return {
            "attempt": self.attempt,
            "routing": None
            if self.routing is None
            else {
                "preferred_source": self.routing.preferred_source,
                "raw_reply": self.routing.raw_reply,
                "error": self.routing.error,
            },
            "pool_counts": self.pool_counts,
            "capped_counts": self.capped_counts,
            "retrieval_failures": self.retrieval_failures,
            "evidence": self.evidence,
            "answer": self.answer,
            "sufficient": self.sufficient,
            "notes": self.notes,
        }


@dataclass
class SubqueryResult:
    answer: str
    reasoning: str
    sufficient: bool
    attempts: int
    evidence_used: EvidenceSet
    index: int = 1
    template: str = ""
    bound_query: str = ""
    fallback: bool = False
    attempt_traces: list[AttemptTrace] = field(default_factory=list)
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "template": self.template,
            "bound_query": self.bound_query,
            "answer": self.answer,
            "reasoning": self.reasoning,
            "sufficient": self.sufficient,
            "attempts": self.attempts,
            "fallback": self.fallback,
            "attempts_detail": [trace.to_dict() for trace in self.attempt_traces],
            "notes": list(self.notes),
        }


@dataclass
class QuestionRun:
    question: str
    final_answer: str
    results: list[SubqueryResult]
    notes: list[str]
    prompt_tokens: int
    completion_tokens: int
    llm_calls: int
    wall_time: float

    def to_dict(self, include_timing: bool = True) -> dict:
        record = {
            "question": self.question,
            "final_answer": self.final_answer,
            "subqueries": [result.to_dict() for result in self.results],
            "notes": self.notes,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "llm_calls": self.llm_calls,
        }
        if include_timing:
            record["wall_time"] = self.wall_time
        return record


def render_synthesis_prompt(bound_query: str, evidence: EvidenceSet) -> str:
    lines = []
    for position, item in enumerate(evidence.items, start=1):
        doc = item.document
        body = f"{doc.title}: {doc.text}" if doc.title else doc.text
        lines.append(f"[{position}] ({item.source}) {body}")
    evidence_text = "\n".join(lines) if lines else "(no evidence retrieved)"
    return SYNTHESIS_TEMPLATE.format(query=bound_query, evidence=evidence_text)


def parse_reply(text: str) -> tuple[str, str, bool, list[str]]:
    """Parse ANSWER/REASONING/SUFFICIENT labeled lines.

    Returns (answer, reasoning, sufficient, warnings). A reply with no labels
    at all is taken verbatim as the answer; a missing or unreadable
    SUFFICIENT flag defaults to true. Both degradations leave a warning.
    """
    sections = {"answer": [], "reasoning": []}
    sufficient_text: str | None = None
    current: str | None = None
    saw_label = False
    for line in text.splitlines():
        match = _LABEL_RE.match(line)
        if match:
            saw_label = True
            label = match.group(1).lower()
            rest = match.group(2)
            if label == "sufficient":
                sufficient_text = rest
                current = None
            else:
                sections[label].append(rest)
                current = label
        elif current is not None:
            sections[current].append(line)

    warnings: list[str] = []
    if not saw_label:
        warnings.append("reply had no ANSWER/REASONING/SUFFICIENT labels; treated as answer")
        return text.strip(), "", True, warnings

    answer = "\n".join(sections["answer"]).strip()
    reasoning = "\n".join(sections["reasoning"]).strip()
    if sufficient_text is None:
        warnings.append("reply missing SUFFICIENT flag; assuming yes")
        return answer, reasoning, True, warnings
    flag = sufficient_text.strip().lower()
    if flag.startswith("y"):
        return answer, reasoning, True, warnings
    if flag.startswith("n"):
        return answer, reasoning, False, warnings
    warnings.append(f"unreadable SUFFICIENT flag {sufficient_text.strip()!r}; assuming yes")
    return answer, reasoning, True, warnings


def generate_answer(bound_query: str, evidence: EvidenceSet, llm) -> SubqueryResult:
    """One synthesis call; transport failure yields an insufficient empty answer."""
    prompt = render_synthesis_prompt(bound_query, evidence)
    try:
        reply = llm.complete(LlmRequest(system="", user=prompt))
    except WIRE_ERRORS as exc:
        return SubqueryResult(
            answer="",
            reasoning="",
            sufficient=False,
            attempts=1,
            evidence_used=evidence,
            bound_query=bound_query,
            notes=(f"generation call failed: {exc}",),
        )
    answer, reasoning, sufficient, warnings = parse_reply(reply.text)
    return SubqueryResult(
        answer=answer,
        reasoning=reasoning,
        sufficient=sufficient,
        attempts=1,
        evidence_used=evidence,
        bound_query=bound_query,
        notes=tuple(warnings),
    )


def _evidence_summary(evidence: EvidenceSet) -> list[dict]:
    return [
        {
            "id": item.document.id,
            "source": item.source,
            "score": item.score,
            "selection_score": evidence.selection_scores.get(item, item.score),
        }
        for item in evidence.items
    ]


def run_subquery(
    subquery: Subquery,
    env: AnswerEnvironment,
    registry: SourceRegistry,
    config: PipelineConfig,
    llm,
    fail_history: FailHistory | None = None,
) -> SubqueryResult:
    """Bind, (route,) retrieve, cap, select, generate — with reflection retries.

    Total by construction: per-stage failures degrade (capless routing, empty
    answer flagged insufficient) and the last attempt is returned as a
    fallback when never sufficient.
    """
    if fail_history is None:
        fail_history = FailHistory()
    bound = substitute_variables(subquery.template, env)
    max_attempts = 1 + (config.max_reflexion_times if config.use_reflection else 0)
    budget = config.budget

    traces: list[AttemptTrace] = []
    result: SubqueryResult | None = None
    for attempt in range(1, max_attempts + 1):
        routing: RoutingDecision | None = None
        if should_route(budget) and len(registry) >= 2:
            routing = route(bound, registry.profiles(), fail_history, llm, attempt)
        preferred = routing.preferred_source if routing else None

        pool = retrieve_multi_source(bound, registry, budget.k_per_source)
        capped = apply_budget(pool, budget, preferred)
        evidence = run_selector(capped, budget, bound, llm)
        result = generate_answer(bound, evidence, llm)

        traces.append(
            AttemptTrace(
                attempt=attempt,
                routing=routing,
                pool_counts=dict(pool.per_source_counts),
                capped_counts=dict(capped.per_source_counts),
                retrieval_failures=dict(pool.failures),
                evidence=_evidence_summary(evidence),
                answer=result.answer,
                sufficient=result.sufficient,
                notes=list(evidence.notes) + list(result.notes),
            )
        )
        if result.sufficient or attempt == max_attempts:
            break
        if preferred is not None:
            fail_history.add(bound, preferred, attempt)

    assert result is not None
    result.index = subquery.index
    result.template = subquery.template
    result.bound_query = bound
    result.attempts = len(traces)
    result.fallback = not result.sufficient
    result.attempt_traces = traces
    return result


def fuse_answers(question: str, results: list[SubqueryResult], llm) -> tuple[str, list[str]]:
    """Merge sub-query findings into one final answer.

    Identity for single-subquery plans (no LLM call); a failed fusion call
    falls back to the last sub-query's answer with a note.
    """
    if not results:
        raise ValueError("no subquery results to fuse")
    if len(results) == 1:
        return results[0].answer, []
    findings = "\n".join(
        f"{result.index}. question: {result.bound_query}\n"
        f"   answer: {result.answer}\n"
        f"   reasoning: {result.reasoning}"
        for result in results
    )
    prompt = FUSION_TEMPLATE.format(question=question, findings=findings)
    try:
        reply = llm.complete(LlmRequest(system="", user=prompt))
    except WIRE_ERRORS as exc:
        return results[-1].answer, [
            f"fusion call failed: {exc}; fell back to the last sub-query answer"
        ]
    return reply.text.strip(), []


def run_question(
    question: str,
    registry: SourceRegistry,
    config: PipelineConfig,
    llm,
) -> QuestionRun:
    """Full pipeline for one question: plan, execute sub-queries in order, fuse."""
    tracked = TrackedLlm(llm)
    started = time.perf_counter()
    notes: list[str] = []

    if config.decompose:
        plan = decompose(question, tracked)
        notes.extend(plan.notes)
    else:
        plan = single_plan(question)

    env: AnswerEnvironment = {}
    fail_history = FailHistory()
    results: list[SubqueryResult] = []
    for subquery in plan.subqueries:
        result = run_subquery(subquery, env, registry, config, tracked, fail_history)
        env[subquery.index] = result.answer
        results.append(result)

    final_answer, fusion_notes = fuse_answers(question, results, tracked)
    notes.extend(fusion_notes)
    return QuestionRun(
        question=question,
        final_answer=final_answer,
        results=results,
        notes=notes,
        prompt_tokens=tracked.total.prompt_tokens,
        completion_tokens=tracked.total.completion_tokens,
        llm_calls=tracked.call_count,
        wall_time=time.perf_counter() - started,
    )
