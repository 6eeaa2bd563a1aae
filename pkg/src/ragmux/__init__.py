"""Multi-source retrieve-then-select RAG pipeline.

Parallel retrieval across heterogeneous sources, preference-conditioned
per-source evidence quotas, pluggable final selectors, dependency-aware
sub-query execution with bounded reflection, and an EM/F1 comparison harness
exposed through a CLI and an HTTP service.
"""

from .corpus import (
    Bm25Index,
    CorpusError,
    Document,
    SourceProfile,
    SourceRegistry,
    build_index,
    ingest_corpus,
    load_preset,
    tokenize,
)
from .evaluation import (
    ComparisonReport,
    EvalConfig,
    exact_match,
    f1,
    load_dataset,
    normalize,
    run_comparison,
    sample_indices,
)
from .generation import (
    PipelineConfig,
    QuestionRun,
    SubqueryResult,
    fuse_answers,
    generate_answer,
    run_question,
    run_subquery,
)
from .llm import (
    LlmReply,
    LlmRequest,
    LlmUsage,
    OpenAiChatLlm,
    ScriptedLlm,
    build_llm,
    count_tokens,
)
from .planner import SubqueryPlan, decompose, single_plan, substitute_variables
from .retrieval import CandidatePool, ScoredCandidate, retrieve_multi_source
from .router import FailHistory, RoutingDecision, route, should_route
from .selection import (
    BudgetConfig,
    EvidenceSet,
    apply_adaptive_cap,
    budget_from_params,
    select_evidence,
    select_judge,
    select_rrf,
    select_score,
)
from .service import create_app

__version__ = "0.1.0"

__all__ = [
    "Bm25Index",
    "BudgetConfig",
    "CandidatePool",
    "ComparisonReport",
    "CorpusError",
    "Document",
    "EvalConfig",
    "EvidenceSet",
    "FailHistory",
    "LlmReply",
    "LlmRequest",
    "LlmUsage",
    "OpenAiChatLlm",
    "PipelineConfig",
    "QuestionRun",
    "RoutingDecision",
    "ScoredCandidate",
    "ScriptedLlm",
    "SourceProfile",
    "SourceRegistry",
    "SubqueryPlan",
    "SubqueryResult",
    "apply_adaptive_cap",
    "budget_from_params",
    "build_index",
    "build_llm",
    "count_tokens",
    "create_app",
    "decompose",
    "exact_match",
    "f1",
    "fuse_answers",
    "generate_answer",
    "ingest_corpus",
    "load_dataset",
    "load_preset",
    "normalize",
    "retrieve_multi_source",
    "route",
    "run_comparison",
    "run_question",
    "run_subquery",
    "sample_indices",
    "select_evidence",
    "select_judge",
    "select_rrf",
    "select_score",
    "should_route",
    "single_plan",
    "substitute_variables",
    "tokenize",
]
