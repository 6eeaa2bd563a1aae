"""Preferred-source routing.

Renders the routing prompt with source profiles, the query, and any failed
routing preferences from earlier attempts, then maps the free-text LLM reply
back onto a registered source name. Matching is total: trimmed lowercase
exact match first, unique substring match second, otherwise no preference
(the pipeline then proceeds capless).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .corpus import SourceProfile
from .llm import WIRE_ERRORS, LlmRequest
from .selection import BudgetConfig

_PROMPT_DIR = Path(__file__).parent / "prompts"
ROUTING_TEMPLATE = (_PROMPT_DIR / "routing.txt").read_text(encoding="utf-8")


@dataclass(frozen=True)
class RoutingDecision:
    preferred_source: str | None
    raw_reply: str
    attempt: int = 1
    error: str | None = None


@dataclass(frozen=True)
class FailEntry:
    subquery: str
    preferred_source: str
    attempt: int


@dataclass
class FailHistory:
    """Failed routing preferences accumulated across reflection retries.

    Entries only grow within a pipeline run; rendering filters to the current
    sub-query so the router is discouraged from repeating a preference that
    already failed for it.
    """

    entries: list[FailEntry] = field(default_factory=list)

    def add(self, subquery: str, preferred_source: str, attempt: int) -> None:
        self.entries.append(FailEntry(subquery, preferred_source, attempt))

    def failed_sources(self, subquery: str) -> list[str]:
        seen: list[str] = []
        for entry in self.entries:
            if entry.subquery == subquery and entry.preferred_source not in seen:
                seen.append(entry.preferred_source)
        return seen

    def render(self, subquery: str) -> str:
        failed = self.failed_sources(subquery)
        if not failed:
            return ""
        return "Previously failed sources for this query: " + ", ".join(failed)


def render_routing_prompt(
    query: str,
    profiles: list[SourceProfile],
    fail_history: FailHistory | None = None,
) -> str:
    profiles_text = "\n".join(f"{p.name}: {p.description}" for p in profiles)
    choices_str = ", ".join(p.name for p in profiles)
    history_text = fail_history.render(query) if fail_history is not None else ""
    return ROUTING_TEMPLATE.format(
        profiles_text=profiles_text,
        query=query,
        fail_history=history_text,
        choices_str=choices_str,
    )


def match_source_reply(reply: str, names: list[str]) -> str | None:
    """Map a free-text reply onto a registered name, or None.

    Trimmed lowercase exact match wins; else a registered name appearing as a
    substring of the reply wins if exactly one does.
    """
    cleaned = reply.strip().lower()
    for name in names:
        if cleaned == name.lower():
            return name
    contained = [name for name in names if name.lower() in cleaned]
    if len(contained) == 1:
        return contained[0]
    return None


def route(
    query: str,
    profiles: list[SourceProfile],
    fail_history: FailHistory,
    llm,
    attempt: int = 1,
) -> RoutingDecision:
    """Ask the LLM for the preferred source; never raises on bad output."""
    if len(profiles) < 2:
        raise ValueError("routing requires at least 2 source profiles")
    prompt = render_routing_prompt(query, profiles, fail_history)
    try:
        reply = llm.complete(LlmRequest(system="", user=prompt))
    except WIRE_ERRORS as exc:
        return RoutingDecision(
            preferred_source=None, raw_reply="", attempt=attempt, error=str(exc)
        )
    names = [p.name for p in profiles]
    return RoutingDecision(
        preferred_source=match_source_reply(reply.text, names),
        raw_reply=reply.text,
        attempt=attempt,
    )


def should_route(budget: BudgetConfig) -> bool:
    """Whether the pipeline consults the router before selection.

    True when both caps are positive (the caps will be applied), when the
    judge selector is configured (its scoring is routing-conditioned), or in
    hard mode (routing is the whole policy there).
    """
    if budget.mode == "hard":
        return True
    if budget.preferred_cap > 0 and budget.other_cap > 0:
        return True
    return budget.selector == "judge"
