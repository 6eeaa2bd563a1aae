"""Evaluation protocol and the arm-comparison runner.

Answers are scored with exact match and token-level F1 after a shared
normalization (lowercase, strip punctuation, split whitespace, drop the
articles a/an/the). Evaluation subsets come from evenly spaced index
sampling, so every arm of a comparison sees exactly the same queries and
repeat runs are deterministic end to end.
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .corpus import SourceRegistry
from .generation import PipelineConfig, run_question

STOPWORDS = frozenset({"a", "an", "the"})

_DELETE_PUNCT = str.maketrans("", "", string.punctuation)


def normalize(text: str) -> list[str]:
    tokens = text.lower().translate(_DELETE_PUNCT).split()
    return [token for token in tokens if token not in STOPWORDS]


def exact_match(prediction: str, gold: str) -> int:
    return int(normalize(prediction) == normalize(gold))


def f1(prediction: str, gold: str) -> float:
    pred_tokens = normalize(prediction)
    gold_tokens = normalize(gold)
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def best_em(prediction: str, golds: list[str]) -> int:
    return max(exact_match(prediction, gold) for gold in golds)


def best_f1(prediction: str, golds: list[str]) -> float:
    return max(f1(prediction, gold) for gold in golds)


def sample_indices(dataset_size: int, n: int) -> list[int]:
    """Evenly spaced deterministic subset: indices[i] = floor(i * size / n)."""
    if n < 1:
        raise ValueError("sample size must be >= 1")
    if n > dataset_size:
        raise ValueError(f"sample size {n} exceeds dataset size {dataset_size}")
    return [i * dataset_size // n for i in range(n)]


@dataclass(frozen=True)
class EvalExample:
    id: str
    question: str
    answers: tuple[str, ...]
    gold_source: str | None = None


def load_dataset(path: str | Path) -> list[EvalExample]:
    """Read a line-delimited dataset: {id?, question, answers | answer, gold_source?}."""
    examples: list[EvalExample] = []
    with Path(path).open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"dataset line {line_no + 1}: invalid JSON ({exc})")
            question = record.get("question")
            if not question:
                raise ValueError(f"dataset line {line_no + 1}: missing 'question'")
            answers = record.get("answers")
            if answers is None:
                answers = [record["answer"]] if "answer" in record else None
            if not answers:
                raise ValueError(f"dataset line {line_no + 1}: missing 'answers'")
            examples.append(
                EvalExample(
                    id=str(record.get("id", f"q{len(examples)}")),
                    question=str(question),
                    answers=tuple(str(answer) for answer in answers),
                    gold_source=record.get("gold_source"),
                )
            )
    if not examples:
        raise ValueError(f"dataset is empty: {path}")
    return examples


@dataclass(frozen=True)
class EvalConfig:
    dataset: str
    sample_size: int
    arms: tuple[tuple[str, PipelineConfig], ...]

    def __post_init__(self) -> None:
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        if not self.arms:
            raise ValueError("at least one arm is required")
        names = [name for name, _ in self.arms]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate arm names: {names}")


def _config_dict(config: PipelineConfig) -> dict:
    budget = config.budget
    return {
        "mode": budget.mode,
        "selector": budget.selector,
        "top_k_per_source": budget.k_per_source,
        "keep_k": budget.keep_k,
        "preferred_cap": budget.preferred_cap,
        "other_cap": budget.other_cap,
        "rrf_constant": budget.rrf_constant,
        "decompose": config.decompose,
        "use_reflection": config.use_reflection,
        "max_reflexion_times": config.max_reflexion_times,
    }


@dataclass
class RunRecord:
    query_id: str
    em: int
    f1: float
    prompt_tokens: int
    wall_time: float
    run: dict = field(default_factory=dict)

    def to_dict(self, include_timing: bool = True) -> dict:
        record = {"query_id": self.query_id, "em": self.em, "f1": self.f1,
                  "prompt_tokens": self.prompt_tokens}
        if include_timing:
            record["wall_time"] = self.wall_time
        record.update(self.run)
        return record


@dataclass
class ArmReport:
    name: str
    config: dict
    records: list[RunRecord]

    def aggregates(self, include_timing: bool = True) -> dict:
        count = len(self.records) or 1
        aggregates = {
            "mean_em": sum(r.em for r in self.records) / count,
            "mean_f1": sum(r.f1 for r in self.records) / count,
            "mean_prompt_tokens": sum(r.prompt_tokens for r in self.records) / count,
        }
        if include_timing:
            aggregates["mean_latency"] = sum(r.wall_time for r in self.records) / count
        return aggregates


@dataclass
class ComparisonReport:
    dataset: str
    sample_size: int
    query_ids: list[str]
    arms: list[ArmReport]

    def to_dict(self, include_timing: bool = True) -> dict:
        return {
            "dataset": self.dataset,
            "sample_size": self.sample_size,
            "query_ids": self.query_ids,
            "arms": [
                {
                    "name": arm.name,
                    "config": arm.config,
                    "aggregates": arm.aggregates(include_timing),
                    "records": [r.to_dict(include_timing) for r in arm.records],
                }
                for arm in self.arms
            ],
        }

    def to_json(self, include_timing: bool = False) -> str:
        # sort_keys plus fixed separators so identical runs serialize to
        # identical bytes; timing is excluded from the canonical form.
        return json.dumps(
            self.to_dict(include_timing), sort_keys=True, separators=(",", ": "), indent=1
        )

    def render_table(self) -> str:
        """Aligned text table: Method, EM, F1, Avg Tokens (EM/F1 scaled to 0-100)."""
        rows = [
            (
                arm.name,
                f"{100 * agg['mean_em']:.2f}",
                f"{100 * agg['mean_f1']:.2f}",
                f"{agg['mean_prompt_tokens']:.1f}",
            )
            for arm in self.arms
            for agg in [arm.aggregates(include_timing=False)]
        ]
        header = ("Method", "EM", "F1", "Avg Tokens")
        widths = [
            max(len(header[col]), *(len(row[col]) for row in rows)) if rows else len(header[col])
            for col in range(4)
        ]
        lines = [
            "  ".join(header[col].ljust(widths[col]) for col in range(4)).rstrip(),
            "  ".join("-" * widths[col] for col in range(4)).rstrip(),
        ]
        for row in rows:
            lines.append("  ".join(row[col].ljust(widths[col]) for col in range(4)).rstrip())
        return "\n".join(lines)


def evaluate_answer(prediction: str, example: EvalExample) -> tuple[int, float]:
    return best_em(prediction, list(example.answers)), best_f1(prediction, list(example.answers))


def run_comparison(
    config: EvalConfig,
    registry: SourceRegistry,
    llm,
    progress: Callable[[int, int], None] | None = None,
) -> ComparisonReport:
    """Run every arm on the same evenly sampled subset and aggregate.

    Per-query pipeline faults score EM=0/F1=0 with the fault recorded; the
    sweep itself never aborts.
    """
    dataset = load_dataset(config.dataset)
    indices = sample_indices(len(dataset), config.sample_size)
    examples = [dataset[i] for i in indices]

    total = len(config.arms) * len(examples)
    completed = 0
    arm_reports: list[ArmReport] = []
    for arm_name, pipeline_config in config.arms:
        records: list[RunRecord] = []
        for example in examples:
            try:
                run = run_question(example.question, registry, pipeline_config, llm)
                em, f1_score = evaluate_answer(run.final_answer, example)
                record = RunRecord(
                    query_id=example.id,
                    em=em,
                    f1=f1_score,
                    prompt_tokens=run.prompt_tokens,
                    wall_time=run.wall_time,
                    run=run.to_dict(include_timing=False),
                )
            except Exception as exc:
                record = RunRecord(
                    query_id=example.id,
                    em=0,
                    f1=0.0,
                    prompt_tokens=0,
                    wall_time=0.0,
                    run={
                        "question": example.question,
                        "final_answer": "",
                        "subqueries": [],
                        "notes": [f"pipeline fault: {type(exc).__name__}: {exc}"],
                        "prompt_tokens": 0,
                        "completion_tokens": 0,
                        "llm_calls": 0,
                    },
                )
            records.append(record)
            completed += 1
            if progress is not None:
                progress(completed, total)
        arm_reports.append(
            ArmReport(name=arm_name, config=_config_dict(pipeline_config), records=records)
        )
    return ComparisonReport(
        dataset=str(config.dataset),
        sample_size=config.sample_size,
        query_ids=[example.id for example in examples],
        arms=arm_reports,
    )
