"""Six-step generation loop with multi-turn refinement and persistence.

One turn runs: embed + retrieve (rag mode), prompt assembly, completion, code
extraction, then optional execution and render. Component failures never
abort a session; they are recorded on the turn as a failure stage so the
evaluation harness can count them. Turns persist as append-only JSON records
under ``<sessions_root>/<session_id>/turn_<n>.json``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, CorpusEntry
from .embedding import EmbedderConfig
from .errors import DomainError
from .executor import ExecutionResult, ExecutorEnv, RenderSpec, run_in_host
from .gateway import ChatMessage, ChatRequest, Gateway, extract_code_block
from .index import SearchHit, VectorIndex
from .retrieval import (
    DEFAULT_BUDGET,
    DEFAULT_K,
    MODE_RAG,
    ExemplarBlock,
    PromptContext,
    PromptTemplate,
    RetrievalContext,
    RetrievedExemplar,
    assemble_prompt,
    default_template,
    retrieve,
)

STAGE_RETRIEVAL = "retrieval_failed"
STAGE_LLM = "llm_failed"
STAGE_EXECUTION = "execution_failed"
STAGE_RENDER = "render_failed"


class SessionError(DomainError):
    pass


class NoPriorTurn(SessionError):
    pass


@dataclass(frozen=True)
class SessionSettings:
    k: int = DEFAULT_K
    budget: int = DEFAULT_BUDGET
    execute: bool = False
    render: bool = False


@dataclass(frozen=True)
class GenerationTurn:
    turn_index: int
    user_request: str
    mode: str
    retrieval: RetrievalContext | None
    prompt: PromptContext | None
    raw_response: str | None
    script: str | None
    execution: ExecutionResult | None
    render_path: str | None
    failure_stage: str | None = None
    failure_detail: str | None = None


@dataclass
class Session:
    session_id: str
    provider_id: str
    mode: str  # MODE_BASE or MODE_RAG
    settings: SessionSettings = field(default_factory=SessionSettings)
    turns: list[GenerationTurn] = field(default_factory=list)


class SessionRunner:
    """Wires the pipeline components and drives sessions turn by turn."""

    def __init__(
        self,
        embedder: EmbedderConfig,
        index: VectorIndex,
        corpus: Corpus,
        gateway: Gateway,
        template: PromptTemplate | None = None,
        executor_env: ExecutorEnv | None = None,
        sessions_root: Path | None = None,
        render_defaults: dict | None = None,
    ):
        self.embedder = embedder
        self.index = index
        self.corpus = corpus
        self.gateway = gateway
        self.template = template or default_template()
        self.executor_env = executor_env
        self.sessions_root = Path(sessions_root) if sessions_root else None
        self.render_defaults = render_defaults or {}

    def generate(self, session: Session, user_request: str) -> GenerationTurn:
        """Run one full turn for a fresh request and append it to the session."""
        return self._run_turn(session, user_request, request_text=user_request, prior_script=None)

    def refine(self, session: Session, follow_up: str) -> GenerationTurn:
        """Run a refinement turn building on the previous turn's script."""
        if not session.turns:
            raise NoPriorTurn("refine requires at least one prior turn")
        prior = session.turns[-1]
        prior_script = prior.script or ""
        # Retrieval sees the evolving request: first request + latest follow-up.
        query_text = f"{session.turns[0].user_request} {follow_up}"
        return self._run_turn(
            session,
            follow_up,
            request_text=query_text,
            prior_script=prior_script,
        )

    def _run_turn(
        self,
        session: Session,
        user_request: str,
        request_text: str,
        prior_script: str | None,
    ) -> GenerationTurn:
        if not user_request or not user_request.strip():
            raise SessionError("request is empty")
        turn_index = len(session.turns) + 1
        failure_stage = failure_detail = None

        retrieval: RetrievalContext | None = None
        prompt: PromptContext | None = None
        raw_response = script = None
        execution: ExecutionResult | None = None
        render_path: str | None = None

        if session.mode == MODE_RAG:
            try:
                retrieval = retrieve(request_text, session.settings.k, self.embedder, self.index, self.corpus)
            except DomainError as exc:
                failure_stage, failure_detail = STAGE_RETRIEVAL, f"{type(exc).__name__}: {exc}"

        if failure_stage is None:
            prompt_request = user_request if prior_script is None else _revision_request(prior_script, user_request)
            prompt = assemble_prompt(
                retrieval if session.mode == MODE_RAG else None,
                prompt_request,
                template=self.template,
                budget=session.settings.budget,
            )
            try:
                response = self.gateway.complete(
                    ChatRequest(
                        messages=(
                            ChatMessage("system", prompt.system_preamble),
                            ChatMessage("user", _user_message(prompt)),
                        ),
                        provider_id=session.provider_id,
                    )
                )
                raw_response = response.content
                script = extract_code_block(raw_response)
            except DomainError as exc:
                failure_stage, failure_detail = STAGE_LLM, f"{type(exc).__name__}: {exc}"

        if failure_stage is None and session.settings.execute and script:
            if self.executor_env is None:
                failure_stage, failure_detail = STAGE_EXECUTION, "ExecutorError: no executor configured"
            else:
                spec = None
                if session.settings.render:
                    out = self._turn_dir(session) / f"render_{turn_index}.png"
                    out.parent.mkdir(parents=True, exist_ok=True)
                    spec = RenderSpec(output_path=out, **self.render_defaults)
                run = run_in_host(script, self.executor_env, render=spec)
                execution = run.execution
                if not execution.success:
                    failure_stage = STAGE_EXECUTION
                    failure_detail = f"{execution.failure_kind}: exit {execution.exit_code}"
                elif session.settings.render:
                    if run.render_path is None:
                        failure_stage, failure_detail = STAGE_RENDER, "MissingOutput: host exited 0 without a render"
                    else:
                        render_path = str(run.render_path)

        turn = GenerationTurn(
            turn_index=turn_index,
            user_request=user_request,
            mode=session.mode,
            retrieval=retrieval,
            prompt=prompt,
            raw_response=raw_response,
            script=script,
            execution=execution,
            render_path=render_path,
            failure_stage=failure_stage,
            failure_detail=failure_detail,
        )
        self._persist_turn(session, turn)
        session.turns.append(turn)
        return turn

    def _turn_dir(self, session: Session) -> Path:
        if self.sessions_root is None:
            return Path(".")
        return self.sessions_root / session.session_id

    def _persist_turn(self, session: Session, turn: GenerationTurn) -> None:
        if self.sessions_root is None:
            return
        turn_dir = self._turn_dir(session)
        turn_dir.mkdir(parents=True, exist_ok=True)
        record = turn_to_record(turn, turn_dir)
        path = turn_dir / f"turn_{turn.turn_index}.json"
        path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _user_message(prompt: PromptContext) -> str:
    # The user message is the rendered prompt minus the system preamble (the
    # preamble travels as the system message).
    body = prompt.rendered
    if prompt.system_preamble and body.startswith(prompt.system_preamble):
        body = body[len(prompt.system_preamble) :]
    return body.lstrip("\n")


def _revision_request(prior_script: str, follow_up: str) -> str:
    return (
        "Revise the following script.\n"
        "Previous script:\n"
        f"```python\n{prior_script}\n```\n"
        f"Revision request: {follow_up}"
    )


def turn_to_record(turn: GenerationTurn, turn_dir: Path) -> dict:
    """Serialize a turn; artifact paths become relative to the session dir."""
    record = dataclasses.asdict(turn)
    if turn.render_path:
        try:
            record["render_path"] = str(Path(turn.render_path).relative_to(turn_dir))
        except ValueError:
            record["render_path"] = turn.render_path
    return record


def record_to_turn(record: dict, turn_dir: Path) -> GenerationTurn:
    """Rebuild a GenerationTurn from its persisted record."""
    retrieval = None
    if record.get("retrieval") is not None:
        raw = record["retrieval"]
        retrieval = RetrievalContext(
            query_text=raw["query_text"],
            hits=tuple(
                RetrievedExemplar(
                    hit=SearchHit(**h["hit"]),
                    entry=CorpusEntry(**h["entry"]),
                    code=h["code"],
                )
                for h in raw["hits"]
            ),
            k=raw["k"],
        )
    prompt = None
    if record.get("prompt") is not None:
        raw = record["prompt"]
        prompt = PromptContext(
            system_preamble=raw["system_preamble"],
            exemplar_blocks=tuple(ExemplarBlock(**b) for b in raw["exemplar_blocks"]),
            user_request=raw["user_request"],
            mode=raw["mode"],
            token_budget=raw["token_budget"],
            rendered=raw["rendered"],
        )
    execution = ExecutionResult(**record["execution"]) if record.get("execution") is not None else None
    render_path = record.get("render_path")
    if render_path:
        render_path = str(turn_dir / render_path)
    return GenerationTurn(
        turn_index=record["turn_index"],
        user_request=record["user_request"],
        mode=record["mode"],
        retrieval=retrieval,
        prompt=prompt,
        raw_response=record.get("raw_response"),
        script=record.get("script"),
        execution=execution,
        render_path=render_path,
        failure_stage=record.get("failure_stage"),
        failure_detail=record.get("failure_detail"),
    )


def save_session_meta(session: Session, sessions_root: Path) -> None:
    meta = {
        "session_id": session.session_id,
        "provider_id": session.provider_id,
        "mode": session.mode,
        "settings": dataclasses.asdict(session.settings),
    }
    session_dir = sessions_root / session.session_id
    session_dir.mkdir(parents=True, exist_ok=True)
    (session_dir / "session.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_session(sessions_root: Path, session_id: str) -> Session:
    """Reload a persisted session with all its turns, in order."""
    session_dir = Path(sessions_root) / session_id
    meta_path = session_dir / "session.json"
    if not meta_path.is_file():
        raise SessionError(f"unknown session {session_id!r}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    session = Session(
        session_id=meta["session_id"],
        provider_id=meta["provider_id"],
        mode=meta["mode"],
        settings=SessionSettings(**meta["settings"]),
    )
    turn_files = sorted(session_dir.glob("turn_*.json"), key=lambda p: int(p.stem.split("_")[1]))
    for path in turn_files:
        record = json.loads(path.read_text(encoding="utf-8"))
        session.turns.append(record_to_turn(record, session_dir))
    return session
