"""Question decomposition and variable binding.

A question becomes an ordered plan of sub-queries; a later sub-query may
embed an earlier answer via the placeholder ``{ans:N}``. Decomposition is
total: unparseable LLM output gets one reformat retry and then falls back to
the single-subquery identity plan.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .llm import WIRE_ERRORS, LlmRequest

_PROMPT_DIR = Path(__file__).parent / "prompts"
DECOMPOSE_TEMPLATE = (_PROMPT_DIR / "decompose.txt").read_text(encoding="utf-8")

PLACEHOLDER_RE = re.compile(r"\{ans:(\d+)\}")
# Plan line: "number | deps or - | sub-query text". Lenient on surrounding
# prose; anything that does not look like a plan line is skipped.
_PLAN_LINE_RE = re.compile(r"^\s*(\d+)\s*\|([^|]*)\|(.+)$")

# AnswerEnvironment: completed sub-query index -> answer text.
AnswerEnvironment = dict[int, str]


@dataclass(frozen=True)
class Subquery:
    index: int
    template: str
    depends_on: frozenset[int]


@dataclass(frozen=True)
class SubqueryPlan:
    subqueries: tuple[Subquery, ...]
    notes: tuple[str, ...] = ()


def single_plan(question: str, notes: tuple[str, ...] = ()) -> SubqueryPlan:
    return SubqueryPlan(
        subqueries=(Subquery(index=1, template=question, depends_on=frozenset()),),
        notes=notes,
    )


def parse_plan(reply: str) -> SubqueryPlan:
    """Parse 'i | deps | text' lines into a validated plan.

    Raises ValueError when no valid plan can be formed; callers decide the
    fallback. Placeholder references to earlier sub-queries are folded into
    depends_on even when the deps column omitted them.
    """
    parsed: list[tuple[int, frozenset[int], str]] = []
    for line in reply.splitlines():
        match = _PLAN_LINE_RE.match(line)
        if match is None:
            continue
        index = int(match.group(1))
        deps_text = match.group(2).strip()
        template = match.group(3).strip()
        if not template:
            raise ValueError(f"plan line {index} has an empty sub-query")
        if deps_text in ("", "-"):
            deps: set[int] = set()
        else:
            try:
                deps = {int(part) for part in re.split(r"[,\s]+", deps_text) if part}
            except ValueError:
                raise ValueError(f"plan line {index} has unparseable dependencies: {deps_text!r}")
        for ph in PLACEHOLDER_RE.finditer(template):
            deps.add(int(ph.group(1)))
        parsed.append((index, frozenset(deps), template))

    if not parsed:
        raise ValueError("no plan lines found")
    parsed.sort(key=lambda item: item[0])
    indices = [index for index, _, _ in parsed]
    if indices != list(range(1, len(parsed) + 1)):
        raise ValueError(f"plan indices are not 1..n: {indices}")
    for index, deps, _ in parsed:
        bad = [d for d in deps if not 1 <= d < index]
        if bad:
            raise ValueError(f"sub-query {index} depends on non-earlier indices {sorted(bad)}")
    return SubqueryPlan(
        subqueries=tuple(
            Subquery(index=index, template=template, depends_on=deps)
            for index, deps, template in parsed
        )
    )


def decompose(question: str, llm) -> SubqueryPlan:
    """Ask the LLM for a plan; one reformat retry, then identity fallback."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    prompt = DECOMPOSE_TEMPLATE.format(question=question)
    attempts = [
        prompt,
        prompt
        + "\n\nYour previous reply could not be parsed. Reply again with only plan lines"
        + " in the exact format: number | dependency numbers or - | sub-query text",
    ]
    failure = ""
    for attempt_prompt in attempts:
        try:
            reply = llm.complete(LlmRequest(system="", user=attempt_prompt))
            return parse_plan(reply.text)
        except WIRE_ERRORS as exc:
            failure = f"decompose call failed: {exc}"
        except ValueError as exc:
            failure = f"decompose reply unusable: {exc}"
    return single_plan(question, notes=(f"{failure}; fell back to single-subquery plan",))


def substitute_variables(template: str, env: AnswerEnvironment) -> str:
    """Replace each {ans:i} with env[i]; unresolved placeholders are hard errors."""

    def bind(match: re.Match[str]) -> str:
        index = int(match.group(1))
        if index not in env:
            raise ValueError(f"unresolved placeholder {index}")
        return env[index]

    return PLACEHOLDER_RE.sub(bind, template)
