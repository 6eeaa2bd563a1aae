"""HTTP API backing the web UI and remote clients.

Endpoints: upload sources, launch comparison runs, poll job progress, fetch
reports and per-query traces. Runs execute on background threads serialized
by a semaphore (single-run concurrency by default); completed runs persist to
the data directory, so a restarted service re-serves the same report bytes.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, Field, field_validator

from .corpus import (
    CorpusError,
    SourceRegistry,
    list_presets,
    load_workspace_sources,
    parse_documents,
    save_source,
)
from .evaluation import EvalConfig, load_dataset, run_comparison
from .generation import PipelineConfig
from .selection import MODES, SELECTORS, budget_from_params


@dataclass
class Job:
    id: str
    state: str = "queued"
    completed: int = 0
    total: int = 0
    error: str | None = None
    report: dict | None = None

    def handle(self) -> dict:
        return {
            "id": self.id,
            "state": self.state,
            "progress": {"completed": self.completed, "total": self.total},
            "error": self.error,
        }


class ArmBody(BaseModel):
    name: str = ""
    mode: str = "adaptive"
    selector: str = "score"
    top_k_per_source: int = 5
    keep_k: int = 5
    preferred_cap: int = 3
    other_cap: int = 1
    rrf_constant: float = 60.0
    decompose: bool = True
    use_reflection: bool = True
    max_reflexion_times: int = 2

    @field_validator("mode")
    @classmethod
    def _mode(cls, value: str) -> str:
        if value not in MODES:
            raise ValueError(f"mode must be one of {', '.join(MODES)}")
        return value

    @field_validator("selector")
    @classmethod
    def _selector(cls, value: str) -> str:
        if value not in SELECTORS:
            raise ValueError(f"selector must be one of {', '.join(SELECTORS)}")
        return value

    @field_validator("top_k_per_source")
    @classmethod
    def _top_k(cls, value: int) -> int:
        if value < 1:
            raise ValueError("top_k_per_source must be >= 1")
        return value

    @field_validator("keep_k")
    @classmethod
    def _keep_k(cls, value: int) -> int:
        if value < 1:
            raise ValueError("keep_k must be >= 1")
        return value

    @field_validator("preferred_cap", "other_cap")
    @classmethod
    def _caps(cls, value: int) -> int:
        if value < 0:
            raise ValueError("caps must be >= 0")
        return value

    @field_validator("rrf_constant")
    @classmethod
    def _rrf(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("rrf_constant must be positive")
        return value

    @field_validator("max_reflexion_times")
    @classmethod
    def _reflexion(cls, value: int) -> int:
        if value < 0:
            raise ValueError("max_reflexion_times must be >= 0")
        return value

    def to_pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            budget=budget_from_params(
                top_k_per_source=self.top_k_per_source,
                keep_k=self.keep_k,
                selector=self.selector,
                preferred_cap=self.preferred_cap,
                other_cap=self.other_cap,
                mode=self.mode,
                rrf_constant=self.rrf_constant,
            ),
            decompose=self.decompose,
            use_reflection=self.use_reflection,
            max_reflexion_times=self.max_reflexion_times,
        )


class RunBody(BaseModel):
    preset: str | None = None
    dataset: str | None = None
    sample_size: int = 10
    sources: list[str] | None = None
    arms: list[ArmBody] = Field(min_length=1)

    @field_validator("sample_size")
    @classmethod
    def _sample_size(cls, value: int) -> int:
        if value < 1:
            raise ValueError("sample_size must be >= 1")
        return value


def _json_bytes(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ": "), indent=1).encode()


def create_app(registry: SourceRegistry, llm, data_dir: str | Path = "ragmux_data") -> FastAPI:
    """App factory; restores workspace sources and completed runs from data_dir."""
    data_dir = Path(data_dir)
    load_workspace_sources(data_dir, registry)

    app = FastAPI(title="multi-source RAG comparison service")
    # the web UI is served separately, so browsers need cross-origin access
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    jobs: dict[str, Job] = {}
    registry_lock = threading.Lock()
    run_slot = threading.Semaphore(1)

    runs_dir = data_dir / "runs"
    if runs_dir.is_dir():
        for run_dir in sorted(runs_dir.iterdir()):
            report_path = run_dir / "report.json"
            if not report_path.is_file():
                continue
            report = json.loads(report_path.read_text(encoding="utf-8"))
            total = len(report.get("query_ids", [])) * len(report.get("arms", []))
            jobs[run_dir.name] = Job(
                id=run_dir.name, state="done", completed=total, total=total, report=report
            )

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.get("/sources")
    def get_sources() -> list[dict]:
        return [
            {"name": p.name, "profile": p.description, "document_count": p.document_count}
            for p in registry.profiles()
        ]

    @app.get("/presets")
    def get_presets() -> list[dict]:
        manifests = []
        for manifest in list_presets():
            base = Path(manifest.pop("_path")).parent
            dataset_path = base / manifest["dataset"]
            manifests.append(
                {
                    "name": manifest["name"],
                    "description": manifest.get("description", ""),
                    "sources": [
                        {"name": s["name"], "profile": s["profile"]}
                        for s in manifest["sources"]
                    ],
                    "dataset_size": len(load_dataset(dataset_path)),
                }
            )
        return manifests

    @app.post("/sources")
    async def post_source(
        file: UploadFile = File(...),
        name: str = Form(...),
        profile: str = Form(...),
        format: str = Form("json"),
    ) -> dict:
        raw_bytes = await file.read()
        try:
            raw = raw_bytes.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise HTTPException(status_code=400, detail=f"file is not UTF-8: {exc}")
        with registry_lock:
            try:
                documents = parse_documents(raw, format, name)
                registered = registry.register(name, profile, documents)
            except CorpusError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            save_source(data_dir, name, profile, documents)
        return {
            "name": registered.name,
            "profile": registered.description,
            "document_count": registered.document_count,
        }

    def _resolve_run(body: RunBody) -> tuple[str, list[str]]:
        """Dataset path and source names for a run body; 422 on anything unknown."""
        if body.preset is not None:
            manifest = next((m for m in list_presets() if m["name"] == body.preset), None)
            if manifest is None:
                raise HTTPException(status_code=422, detail=f"unknown preset: {body.preset!r}")
            base = Path(manifest["_path"]).parent
            dataset = str(base / manifest["dataset"])
            sources = body.sources or [s["name"] for s in manifest["sources"]]
        elif body.dataset is not None:
            if not Path(body.dataset).is_file():
                raise HTTPException(
                    status_code=422, detail=f"dataset file not found: {body.dataset}"
                )
            dataset = body.dataset
            sources = body.sources or registry.names()
        else:
            raise HTTPException(status_code=422, detail="either preset or dataset is required")
        for source in sources:
            if source not in registry:
                raise HTTPException(status_code=422, detail=f"unknown source: {source!r}")
        if not sources:
            raise HTTPException(status_code=422, detail="no sources to run against")
        return dataset, sources

    def _execute(job: Job, config: EvalConfig, run_registry: SourceRegistry, body: RunBody) -> None:
        with run_slot:
            job.state = "running"
            try:
                def progress(completed: int, total: int) -> None:
                    job.completed, job.total = completed, total

                report = run_comparison(config, run_registry, llm, progress)
                run_dir = runs_dir / job.id
                run_dir.mkdir(parents=True, exist_ok=True)
                report_bytes = _json_bytes(report.to_dict(include_timing=True))
                (run_dir / "report.json").write_bytes(report_bytes)
                (run_dir / "config.json").write_bytes(
                    _json_bytes(body.model_dump(mode="json"))
                )
                job.report = json.loads(report_bytes)
                job.state = "done"
            except Exception as exc:
                job.error = f"{type(exc).__name__}: {exc}"
                job.state = "failed"

    @app.post("/runs", status_code=202)
    def post_run(body: RunBody) -> JSONResponse:
        dataset, sources = _resolve_run(body)
        dataset_size = len(load_dataset(dataset))
        if body.sample_size > dataset_size:
            raise HTTPException(
                status_code=422,
                detail=f"sample_size {body.sample_size} exceeds dataset size {dataset_size}",
            )
        arms = [(arm.name or arm.mode, arm.to_pipeline_config()) for arm in body.arms]
        names = [name for name, _ in arms]
        if len(set(names)) != len(names):
            raise HTTPException(status_code=422, detail=f"duplicate arm names: {names}")

        config = EvalConfig(dataset=dataset, sample_size=body.sample_size, arms=tuple(arms))
        with registry_lock:
            run_registry = registry.subset(sources)
        job = Job(id=uuid.uuid4().hex, total=len(arms) * body.sample_size)
        jobs[job.id] = job
        threading.Thread(
            target=_execute, args=(job, config, run_registry, body), daemon=True
        ).start()
        return JSONResponse(status_code=202, content=job.handle())

    def _get_job(job_id: str) -> Job:
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown run: {job_id!r}")
        return job

    @app.get("/runs/{job_id}")
    def get_run(job_id: str) -> dict:
        job = _get_job(job_id)
        payload = job.handle()
        payload["report"] = job.report
        return payload

    @app.get("/runs/{job_id}/report")
    def get_run_report(job_id: str) -> Response:
        job = _get_job(job_id)
        report_path = runs_dir / job_id / "report.json"
        if job.state != "done" or not report_path.is_file():
            raise HTTPException(status_code=404, detail=f"run {job_id!r} has no report yet")
        # Exact persisted bytes, so re-fetching after a restart is byte-identical.
        return Response(content=report_path.read_bytes(), media_type="application/json")

    @app.get("/runs/{job_id}/trace/{query_id}")
    def get_trace(job_id: str, query_id: str) -> dict:
        job = _get_job(job_id)
        if job.report is None:
            raise HTTPException(status_code=404, detail=f"run {job_id!r} is not finished")
        records = []
        for arm in job.report["arms"]:
            for record in arm["records"]:
                if record["query_id"] == query_id:
                    records.append({"arm": arm["name"], **record})
        if not records:
            raise HTTPException(status_code=404, detail=f"unknown query id: {query_id!r}")
        return {"query_id": query_id, "records": records}

    return app
