"""Command-line front door: ingest corpora, ask, compare arms, serve the API.

Configuration precedence is flags > environment (RAGMUX_*) > config file >
defaults, field by field. Flag names mirror the demo parameters
(--top-k-per-source, --keep-k, --selector, --preferred-cap, --other-cap,
--decompose, --use-reflection, --sample-size, --mode).
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys
from pathlib import Path

from .corpus import (
    CorpusError,
    SourceRegistry,
    load_documents,
    load_preset,
    load_workspace_sources,
    preset_dir,
    save_source,
)
from .evaluation import EvalConfig, run_comparison
from .generation import PipelineConfig, run_question
from .llm import build_llm
from .selection import MODES, SELECTORS, budget_from_params
from .service import create_app

ENV_PREFIX = "RAGMUX_"

DEFAULTS: dict = {
    "top_k_per_source": 5,
    "keep_k": 5,
    "selector": "score",
    "preferred_cap": 3,
    "other_cap": 1,
    "decompose": True,
    "use_reflection": True,
    "sample_size": 10,
    "mode": "adaptive",
    "rrf_constant": 60.0,
    "max_reflexion_times": 2,
}

_BOOL_FIELDS = ("decompose", "use_reflection")


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _cast(field: str, value):
    if field in _BOOL_FIELDS:
        return _parse_bool(value)
    return type(DEFAULTS[field])(value)


def resolve_config(flags: dict, env: dict, file_config: dict) -> dict:
    """Merge per field: flags > environment > file > defaults."""
    resolved = dict(DEFAULTS)
    for field in DEFAULTS:
        if file_config.get(field) is not None:
            resolved[field] = _cast(field, file_config[field])
        env_key = ENV_PREFIX + field.upper()
        if env.get(env_key) is not None:
            resolved[field] = _cast(field, env[env_key])
        if flags.get(field) is not None:
            resolved[field] = _cast(field, flags[field])
    return resolved


def pipeline_config_from(resolved: dict, mode: str | None = None) -> PipelineConfig:
    return PipelineConfig(
        budget=budget_from_params(
            top_k_per_source=resolved["top_k_per_source"],
            keep_k=resolved["keep_k"],
            selector=resolved["selector"],
            preferred_cap=resolved["preferred_cap"],
            other_cap=resolved["other_cap"],
            mode=mode or resolved["mode"],
            rrf_constant=resolved["rrf_constant"],
        ),
        decompose=resolved["decompose"],
        use_reflection=resolved["use_reflection"],
        max_reflexion_times=resolved["max_reflexion_times"],
    )


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--top-k-per-source", type=int, dest="top_k_per_source")
    parser.add_argument("--keep-k", type=int, dest="keep_k")
    parser.add_argument("--selector", choices=list(SELECTORS))
    parser.add_argument("--preferred-cap", type=int, dest="preferred_cap")
    parser.add_argument("--other-cap", type=int, dest="other_cap")
    parser.add_argument(
        "--decompose", action=argparse.BooleanOptionalAction, default=None
    )
    parser.add_argument(
        "--use-reflection",
        action=argparse.BooleanOptionalAction,
        default=None,
        dest="use_reflection",
    )
    parser.add_argument("--sample-size", type=int, dest="sample_size")
    parser.add_argument("--mode", choices=list(MODES))
    parser.add_argument("--rrf-constant", type=float, dest="rrf_constant")
    parser.add_argument("--max-reflexion-times", type=int, dest="max_reflexion_times")


def _add_source_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", help="bundled preset name or manifest path")
    parser.add_argument("--data-dir", dest="data_dir", help="workspace with ingested sources")


def _add_llm_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--llm-backend", choices=["stub", "openai"], dest="llm_backend")
    parser.add_argument("--llm-script", dest="llm_script", help="stub script JSON file")
    parser.add_argument("--llm-base-url", dest="llm_base_url")
    parser.add_argument("--llm-model", dest="llm_model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragmux",
        description="multi-source retrieve-then-select RAG pipeline",
    )
    parser.add_argument("--config", help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", help="parse a corpus file into the workspace")
    ingest.add_argument("--file", required=True)
    ingest.add_argument("--name", required=True)
    ingest.add_argument("--profile", required=True)
    ingest.add_argument("--format", choices=["json", "csv"], default="json")
    ingest.add_argument("--data-dir", dest="data_dir", default="ragmux_data")
    ingest.set_defaults(func=cmd_ingest)

    ask = sub.add_parser("ask", help="answer one question with the full pipeline")
    ask.add_argument("question")
    ask.add_argument("--trace", action="store_true")
    _add_source_flags(ask)
    _add_llm_flags(ask)
    _add_pipeline_flags(ask)
    ask.set_defaults(func=cmd_ask)

    compare = sub.add_parser("compare", help="run arms on a dataset and report EM/F1")
    compare.add_argument("--dataset", help="line-delimited dataset (defaults to the preset's)")
    compare.add_argument(
        "--arms",
        default="adaptive,hard",
        help="comma-separated arm modes (default: adaptive,hard)",
    )
    compare.add_argument("--out", default="reports", help="directory for report files")
    _add_source_flags(compare)
    _add_llm_flags(compare)
    _add_pipeline_flags(compare)
    compare.set_defaults(func=cmd_compare)

    serve = sub.add_parser("serve", help="start the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    _add_source_flags(serve)
    _add_llm_flags(serve)
    serve.set_defaults(func=cmd_serve)

    return parser


def _load_file_config(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    path = Path(args.config)
    if not path.is_file():
        raise CorpusError(f"config file not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def _resolved_config(args, env: dict, file_config: dict) -> dict:
    flags = {field: getattr(args, field, None) for field in DEFAULTS}
    return resolve_config(flags, env, file_config)


def _build_backend(args, file_config: dict):
    config = dict(file_config.get("llm", {}))
    if getattr(args, "llm_backend", None):
        config["backend"] = args.llm_backend
    if getattr(args, "llm_script", None):
        config["backend"] = "stub"
        config["script"] = args.llm_script
    if getattr(args, "llm_base_url", None):
        config["base_url"] = args.llm_base_url
    if getattr(args, "llm_model", None):
        config["model"] = args.llm_model
    if config.get("backend") == "stub" and "script" not in config and "rules" not in config:
        # Bare --llm-backend stub gets the bundled demo script so the preset
        # datasets work fully offline.
        config["script"] = str(preset_dir() / "demo_stub.json")
    return build_llm(config)


def _build_registry(args) -> tuple[SourceRegistry, Path | None]:
    registry = SourceRegistry()
    dataset_path: Path | None = None
    if getattr(args, "preset", None):
        dataset_path = load_preset(args.preset, registry)
    if getattr(args, "data_dir", None):
        load_workspace_sources(args.data_dir, registry)
    return registry, dataset_path


def cmd_ingest(args, env: dict) -> int:
    source_dir = Path(args.data_dir) / "sources" / args.name
    if source_dir.exists():
        print(f"duplicate source: {args.name!r}", file=sys.stderr)
        return 1
    documents = load_documents(args.file, args.format, args.name)
    save_source(args.data_dir, args.name, args.profile, documents)
    print(f"ingested {args.name}: {len(documents)} documents")
    return 0


def _format_counts(counts: dict) -> str:
    return "{" + ", ".join(f"{name}:{count}" for name, count in counts.items()) + "}"


def _print_trace(run) -> None:
    for result in run.results:
        print(f"subquery {result.index}: {result.template}")
        if result.bound_query != result.template:
            print(f"  bound: {result.bound_query}")
        for trace in result.attempt_traces:
            preferred = trace.routing.preferred_source if trace.routing else None
            print(
                f"  attempt {trace.attempt}: preferred={preferred}"
                f" pool={_format_counts(trace.pool_counts)}"
                f" capped={_format_counts(trace.capped_counts)}"
            )
            for item in trace.evidence:
                print(
                    f"    evidence: {item['source']}/{item['id']}"
                    f" score={item['score']:.4f} sel={item['selection_score']:.4f}"
                )
            for note in trace.notes:
                print(f"    note: {note}")
        status = "fallback" if result.fallback else "sufficient"
        print(f"  answer: {result.answer} ({status}, attempts={result.attempts})")
    for note in run.notes:
        print(f"note: {note}")


def cmd_ask(args, env: dict) -> int:
    file_config = _load_file_config(args)
    resolved = _resolved_config(args, env, file_config)
    registry, _ = _build_registry(args)
    if len(registry) == 0:
        print("no sources registered; use --preset or --data-dir", file=sys.stderr)
        return 1
    llm = _build_backend(args, file_config)
    config = pipeline_config_from(resolved)
    try:
        run = run_question(args.question, registry, config, llm)
    except Exception as exc:
        print(f"pipeline fault: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.trace:
        _print_trace(run)
    print(f"final answer: {run.final_answer}")
    return 0


def cmd_compare(args, env: dict) -> int:
    file_config = _load_file_config(args)
    resolved = _resolved_config(args, env, file_config)
    registry, preset_dataset = _build_registry(args)
    if len(registry) == 0:
        print("no sources registered; use --preset or --data-dir", file=sys.stderr)
        return 1
    dataset = args.dataset or (str(preset_dataset) if preset_dataset else None)
    if dataset is None:
        print("no dataset: pass --dataset or a --preset that bundles one", file=sys.stderr)
        return 1

    modes = [mode.strip() for mode in args.arms.split(",") if mode.strip()]
    unknown = [mode for mode in modes if mode not in MODES]
    if unknown:
        print(f"unknown arm mode(s): {', '.join(unknown)}", file=sys.stderr)
        return 1
    arms = tuple((mode, pipeline_config_from(resolved, mode=mode)) for mode in modes)

    llm = _build_backend(args, file_config)
    config = EvalConfig(dataset=dataset, sample_size=resolved["sample_size"], arms=arms)
    report = run_comparison(config, registry, llm)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    # Canonical report excludes timing so repeat runs are byte-identical.
    (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    table = report.render_table()
    (out_dir / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def cmd_serve(args, env: dict) -> int:
    import uvicorn

    file_config = _load_file_config(args)
    registry, _ = _build_registry(args)
    llm = _build_backend(args, file_config)
    data_dir = args.data_dir or "ragmux_data"
    app = create_app(registry, llm, data_dir=data_dir)

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((args.host, args.port))
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return 1
    finally:
        probe.close()

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, dict(os.environ))
    except (CorpusError, ValueError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
