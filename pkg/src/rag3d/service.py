"""HTTP service exposing retrieval, sessions, corpus assets, and evaluation.

Every endpoint is a thin adapter over a core module; stage failures inside a
turn come back inside the turn record with HTTP 200, transport codes are
reserved for transport problems. When an auth token is configured (config
file or the RAG3D_TOKEN env var), all non-health endpoints require
``Authorization: Bearer <token>``.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse

from . import evaluation
from .corpus import Corpus, load_corpus
from .embedding import EmbedderConfig, embed_batch
from .errors import DomainError
from .executor import ExecutorEnv
from .gateway import Gateway, default_registry, load_registry
from .index import EmptyIndex, IndexRecord, VectorIndex
from .retrieval import DEFAULT_K, MODE_BASE, MODE_RAG, EmptyQuery, default_template, load_template, retrieve
from .session import (
    NoPriorTurn,
    Session,
    SessionRunner,
    SessionSettings,
    save_session_meta,
    turn_to_record,
)

logger = logging.getLogger(__name__)

AUTH_TOKEN_ENV = "RAG3D_TOKEN"


class ServiceError(DomainError):
    pass


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8040
    corpus_root: str = ""
    snapshot_path: str = ""
    sessions_root: str = "sessions"
    registry_path: str = ""
    template_path: str = ""
    auth_token: str = ""
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    executor: ExecutorEnv | None = None
    scorer: dict = field(default_factory=dict)  # {"kind": "constant"|"remote", ...}

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        embedder = EmbedderConfig(**data.pop("embedder", {}))
        executor = ExecutorEnv(**data.pop("executor")) if "executor" in data else None
        return cls(embedder=embedder, executor=executor, **data)


@dataclass
class EvalJob:
    report_id: str
    total: int
    completed: int = 0
    status: str = "running"  # running | complete | failed
    report: dict | None = None
    error: str = ""


class AppState:
    """Loaded components plus per-session locks and evaluation jobs."""

    def __init__(
        self,
        config: ServiceConfig,
        corpus: Corpus,
        index: VectorIndex,
        gateway: Gateway,
        scorer=None,
    ):
        self.config = config
        self.corpus = corpus
        self.index = index
        self.gateway = gateway
        self.scorer = scorer
        self.template = load_template(config.template_path) if config.template_path else default_template()
        self.sessions_root = Path(config.sessions_root)
        self.sessions: dict[str, Session] = {}
        self.session_locks: dict[str, threading.Lock] = {}
        self.jobs: dict[str, EvalJob] = {}
        self._lock = threading.Lock()
        self.runner = SessionRunner(
            embedder=config.embedder,
            index=index,
            corpus=corpus,
            gateway=gateway,
            template=self.template,
            executor_env=config.executor,
            sessions_root=self.sessions_root,
        )

    @property
    def auth_token(self) -> str:
        return os.environ.get(AUTH_TOKEN_ENV) or self.config.auth_token

    def session_lock(self, session_id: str) -> threading.Lock:
        with self._lock:
            if session_id not in self.session_locks:
                self.session_locks[session_id] = threading.Lock()
            return self.session_locks[session_id]


def build_state(config: ServiceConfig) -> AppState:
    """Load corpus, index (snapshot or fresh build), registry, and scorer."""
    corpus = load_corpus(config.corpus_root)
    snapshot = Path(config.snapshot_path) if config.snapshot_path else None
    if snapshot and snapshot.is_file():
        index = VectorIndex.load_snapshot(snapshot)
    else:
        index = build_index(corpus, config.embedder)
        if snapshot:
            index.save_snapshot(snapshot)
    registry = load_registry(config.registry_path) if config.registry_path else default_registry()
    gateway = Gateway(registry)
    scorer = make_scorer(config.scorer)
    return AppState(config=config, corpus=corpus, index=index, gateway=gateway, scorer=scorer)


def build_index(corpus: Corpus, embedder: EmbedderConfig) -> VectorIndex:
    """Embed every corpus description and index it under the entry id."""
    index = VectorIndex()
    vectors = embed_batch([e.description for e in corpus.entries], embedder)
    for entry, vector in zip(corpus.entries, vectors):
        index.insert(IndexRecord(entry_id=entry.id, vector=vector))
    return index


def make_scorer(spec: dict):
    if not spec:
        return None
    kind = spec.get("kind")
    if kind == "constant":
        return evaluation.ConstantScorer(score=float(spec.get("score", 0.5)))
    if kind == "remote":
        return evaluation.ScorerClient(endpoint=spec["endpoint"], timeout=float(spec.get("timeout", 30.0)))
    raise ServiceError(f"unknown scorer kind {kind!r}")


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "message": message})


def create_app(state: AppState) -> FastAPI:
    app = FastAPI(title="rag3d", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def handle_validation(request: Request, exc: RequestValidationError):
        return _error(400, "BadRequest", str(exc.errors()[:3]))

    @app.exception_handler(DomainError)
    async def handle_domain(request: Request, exc: DomainError):
        return _error(500, type(exc).__name__, str(exc))

    @app.middleware("http")
    async def check_auth(request: Request, call_next):
        token = state.auth_token
        if token and request.url.path != "/health":
            supplied = request.headers.get("authorization", "")
            if supplied != f"Bearer {token}":
                return _error(401, "Unauthorized", "missing or incorrect token")
        return await call_next(request)

    @app.get("/health")
    def health():
        index_size = state.index.size
        return {
            "status": "ok" if index_size > 0 else "degraded",
            "index_size": index_size,
            "corpus_size": len(state.corpus),
            "providers": sorted(state.gateway.registry),
        }

    @app.post("/retrieve")
    async def retrieve_endpoint(request: Request):
        body = await request.json()
        query = body.get("query", "")
        try:
            k = int(body.get("k", DEFAULT_K))
        except (TypeError, ValueError):
            return _error(400, "BadRequest", f"k must be an integer, got {body.get('k')!r}")
        if k < 1:
            return _error(400, "BadRequest", f"k must be >= 1, got {k}")
        try:
            ctx = retrieve(query, k, state.config.embedder, state.index, state.corpus)
        except EmptyQuery as exc:
            return _error(400, "EmptyQuery", str(exc))
        except EmptyIndex as exc:
            return _error(503, "EmptyIndex", str(exc))
        return {
            "hits": [
                {
                    "entry_id": ex.hit.entry_id,
                    "score": ex.hit.score,
                    "rank": ex.hit.rank,
                    "description": ex.entry.description,
                    "image_url": f"/assets/corpus/{ex.entry.image_path}",
                }
                for ex in ctx.hits
            ]
        }

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await request.json()
        provider_id = body.get("provider_id", "")
        if provider_id not in state.gateway.registry:
            return _error(422, "UnknownProvider", f"provider {provider_id!r} is not registered")
        mode = body.get("mode", MODE_RAG)
        if mode not in (MODE_BASE, MODE_RAG):
            return _error(400, "BadRequest", f"mode must be 'base' or 'rag', got {mode!r}")
        try:
            settings = SessionSettings(**body.get("settings", {}))
        except TypeError as exc:
            return _error(400, "BadRequest", f"invalid settings: {exc}")
        session = Session(
            session_id=uuid.uuid4().hex[:12],
            provider_id=provider_id,
            mode=mode,
            settings=settings,
        )
        state.sessions[session.session_id] = session
        save_session_meta(session, state.sessions_root)
        return {"session_id": session.session_id}

    def _turn_response(session: Session, turn) -> dict:
        record = turn_to_record(turn, state.sessions_root / session.session_id)
        if turn.render_path:
            record["render_url"] = f"/assets/sessions/{session.session_id}/{Path(turn.render_path).name}"
        return record

    @app.post("/sessions/{session_id}/generate")
    async def generate_turn(session_id: str, request: Request):
        session = state.sessions.get(session_id)
        if session is None:
            return _error(404, "UnknownSession", f"no session {session_id!r}")
        body = await request.json()
        user_request = body.get("request", "")
        if not user_request.strip():
            return _error(400, "EmptyRequest", "request is empty")
        with state.session_lock(session_id):
            turn = state.runner.generate(session, user_request)
        return _turn_response(session, turn)

    @app.post("/sessions/{session_id}/refine")
    async def refine_turn(session_id: str, request: Request):
        session = state.sessions.get(session_id)
        if session is None:
            return _error(404, "UnknownSession", f"no session {session_id!r}")
        body = await request.json()
        follow_up = body.get("follow_up", "")
        if not follow_up.strip():
            return _error(400, "EmptyRequest", "follow_up is empty")
        with state.session_lock(session_id):
            try:
                turn = state.runner.refine(session, follow_up)
            except NoPriorTurn as exc:
                return _error(409, "NoPriorTurn", str(exc))
        return _turn_response(session, turn)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = state.sessions.get(session_id)
        if session is None:
            return _error(404, "UnknownSession", f"no session {session_id!r}")
        return {
            "session_id": session.session_id,
            "provider_id": session.provider_id,
            "mode": session.mode,
            "settings": {
                "k": session.settings.k,
                "budget": session.settings.budget,
                "execute": session.settings.execute,
                "render": session.settings.render,
            },
            "turns": [_turn_response(session, turn) for turn in session.turns],
        }

    @app.post("/evaluate")
    async def evaluate(request: Request):
        body = await request.json()
        prompt_set_path = body.get("prompt_set_path", "")
        providers = body.get("providers", [])
        conditions = body.get("conditions", list(evaluation.CONDITIONS))
        if not prompt_set_path or not Path(prompt_set_path).is_file():
            return _error(400, "BadRequest", f"prompt_set_path does not exist: {prompt_set_path!r}")
        for provider_id in providers:
            if provider_id not in state.gateway.registry:
                return _error(422, "UnknownProvider", f"provider {provider_id!r} is not registered")
        if state.config.executor is None:
            return _error(400, "BadRequest", "service has no executor configured for evaluation")

        prompts = evaluation.load_prompt_set(prompt_set_path)
        report_id = uuid.uuid4().hex[:12]
        job = EvalJob(report_id=report_id, total=len(prompts) * len(providers) * len(conditions))
        state.jobs[report_id] = job

        def progress(done: int, total: int) -> None:
            job.completed = done

        def run() -> None:
            try:
                cfg = evaluation.EvalConfig(
                    embedder=state.config.embedder,
                    index=state.index,
                    corpus=state.corpus,
                    gateway=state.gateway,
                    executor_env=state.config.executor,
                    out_dir=state.sessions_root / "eval" / report_id,
                    template=state.template,
                    scorer=state.scorer,
                    progress=progress,
                )
                report, _ = evaluation.run_eval(prompts, providers, conditions, cfg)
                job.report = report_to_json(report)
                job.status = "complete"
            except Exception as exc:  # job errors surface via the report endpoint
                logger.exception("evaluation job %s failed", report_id)
                job.status = "failed"
                job.error = f"{type(exc).__name__}: {exc}"

        threading.Thread(target=run, daemon=True).start()
        return {"report_id": report_id}

    @app.get("/reports/{report_id}")
    def get_report(report_id: str):
        job = state.jobs.get(report_id)
        if job is None:
            return _error(404, "UnknownReport", f"no report {report_id!r}")
        if job.status == "running":
            return {"status": "running", "completed": job.completed, "total": job.total}
        if job.status == "failed":
            return {"status": "failed", "error": job.error}
        return {"status": "complete", "report": job.report}

    @app.get("/assets/{scope}/{asset_path:path}")
    def get_asset(scope: str, asset_path: str):
        roots = {"corpus": Path(state.corpus.root), "sessions": state.sessions_root}
        root = roots.get(scope)
        if root is None:
            return _error(404, "UnknownScope", f"no asset scope {scope!r}")
        target = (root / asset_path).resolve()
        try:
            target.relative_to(root.resolve())
        except ValueError:
            return _error(400, "BadPath", "path escapes the asset root")
        if not target.is_file():
            return _error(404, "MissingAsset", f"no such asset: {asset_path}")
        return FileResponse(target)

    return app


def report_to_json(report: evaluation.EvaluationReport) -> dict:
    return {
        "providers": list(report.providers),
        "conditions": list(report.conditions),
        "cells": {
            f"{provider}/{condition}": {
                "compilation_rate": cell.compilation_rate,
                "alignment_mean": cell.alignment_mean,
                "n": cell.n,
            }
            for (provider, condition), cell in sorted(report.cells.items())
        },
        "averages": report.averages,
        "annotations": list(report.annotations),
        "scorer_id": report.scorer_id,
    }
