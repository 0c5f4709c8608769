"""Evaluation protocol: base vs RAG runs, compilation rate, alignment score.

Each (prompt, provider, condition) item is one single-turn generation with
execution and, when configured, a render scored by an external alignment
service. Launcher faults are excluded from metric denominators; script
failures count against the compilation rate. Report files contain no wall
clock data and only relative paths, so a rerun of a fully mocked
configuration is byte-identical.

Rounding rule (pinned): decimal half-up, one decimal for percentages and
three for alignment scores.
"""

from __future__ import annotations

import base64
import csv
import io
import json
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable

import requests

from .corpus import Corpus
from .embedding import EmbedderConfig
from .errors import DomainError
from .executor import FAILURE_LAUNCHER, ExecutorEnv
from .gateway import Gateway
from .index import VectorIndex
from .retrieval import DEFAULT_BUDGET, DEFAULT_K, MODE_BASE, MODE_RAG, PromptTemplate
from .session import Session, SessionRunner, SessionSettings

logger = logging.getLogger(__name__)

CONDITIONS = (MODE_BASE, MODE_RAG)


class EvaluationError(DomainError):
    pass


class EmptyCell(EvaluationError):
    pass


class NoAlignedResults(EvaluationError):
    pass


class ConditionMismatch(EvaluationError):
    pass


class ScorerUnreachable(EvaluationError):
    pass


class ScorerBadResponse(EvaluationError):
    pass


class MissingImage(EvaluationError):
    pass


@dataclass(frozen=True)
class EvalPrompt:
    prompt_id: str
    text: str
    tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class ItemResult:
    prompt_id: str
    provider_id: str
    condition: str
    compiled: bool | None  # None: excluded (launcher fault)
    alignment: float | None
    artifacts: dict[str, str] = field(default_factory=dict)
    note: str = ""


@dataclass(frozen=True)
class EvalCell:
    compilation_rate: float
    alignment_mean: float | None
    n: int


@dataclass(frozen=True)
class EvaluationReport:
    cells: dict[tuple[str, str], EvalCell]  # (provider_id, condition) -> cell
    averages: dict[str, dict[str, float | None]]  # condition -> {compilation, alignment}
    providers: tuple[str, ...]
    conditions: tuple[str, ...]
    annotations: tuple[str, ...] = ()
    scorer_id: str = ""


def round_half_up(value: float, places: int) -> float:
    """Decimal half-up rounding of a float's shortest repr."""
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def compilation_rate(results: list[ItemResult]) -> float:
    """Percent of non-excluded items that compiled, to one decimal."""
    counted = [r for r in results if r.compiled is not None]
    if not counted:
        raise EmptyCell("no non-excluded results in cell")
    rate = 100.0 * sum(1 for r in counted if r.compiled) / len(counted)
    return round_half_up(rate, 1)


def alignment_mean(results: list[ItemResult]) -> float:
    """Mean alignment over items that produced renders, to three decimals."""
    scores = [r.alignment for r in results if r.alignment is not None]
    if not scores:
        raise NoAlignedResults("no results with alignment scores")
    return round_half_up(sum(scores) / len(scores), 3)


def aggregate_report(
    cells: dict[tuple[str, str], EvalCell],
    annotations: tuple[str, ...] = (),
    scorer_id: str = "",
) -> EvaluationReport:
    """Add the unweighted across-provider averages row, at table precision."""
    conditions = tuple(sorted({cond for _, cond in cells}, key=CONDITIONS.index))
    providers_by_condition = {
        cond: tuple(sorted(p for p, c in cells if c == cond)) for cond in conditions
    }
    provider_sets = set(providers_by_condition.values())
    if len(provider_sets) > 1:
        raise ConditionMismatch(f"provider sets differ across conditions: {providers_by_condition}")
    providers = provider_sets.pop() if provider_sets else ()

    averages: dict[str, dict[str, float | None]] = {}
    for cond in conditions:
        rates = [cells[(p, cond)].compilation_rate for p in providers]
        aligns = [cells[(p, cond)].alignment_mean for p in providers]
        averages[cond] = {
            "compilation": round_half_up(sum(rates) / len(rates), 1) if rates else None,
            "alignment": (
                round_half_up(sum(a for a in aligns) / len(aligns), 3)
                if aligns and all(a is not None for a in aligns)
                else None
            ),
        }
    return EvaluationReport(
        cells=dict(cells),
        averages=averages,
        providers=providers,
        conditions=conditions,
        annotations=annotations,
        scorer_id=scorer_id,
    )


class ScorerClient:
    """Client for the external prompt-image alignment scorer service."""

    def __init__(self, endpoint: str, timeout: float = 30.0, transport: Callable | None = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self._transport = transport or requests.post
        self.scorer_id = ""

    def score(self, text: str, image_path: Path) -> float:
        payload = {
            "text": text,
            "image_b64": base64.b64encode(Path(image_path).read_bytes()).decode("ascii"),
        }
        try:
            response = self._transport(self.endpoint, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ScorerUnreachable(f"alignment scorer unreachable: {exc}") from exc
        if response.status_code != 200:
            raise ScorerUnreachable(f"alignment scorer returned {response.status_code}")
        try:
            body = response.json()
            score = float(body["score"])
            self.scorer_id = str(body.get("scorer_id", ""))
        except (ValueError, KeyError, TypeError):
            raise ScorerBadResponse("scorer response is not {score, scorer_id}") from None
        return score


class ConstantScorer:
    """Offline scorer returning a fixed score; used for stubbed evaluation."""

    def __init__(self, score: float = 0.5, scorer_id: str = "constant-stub"):
        self._score = score
        self.scorer_id = scorer_id

    def score(self, text: str, image_path: Path) -> float:
        del text, image_path
        return self._score


def score_alignment(prompt_text: str, image_path: Path, scorer) -> float:
    """Forward (text, image) to the scorer; clamp the result into [0, 1]."""
    image_path = Path(image_path)
    if not image_path.is_file():
        raise MissingImage(f"image does not exist: {image_path}")
    score = scorer.score(prompt_text, image_path)
    if score < 0.0 or score > 1.0:
        logger.warning("scorer returned out-of-range score %s; clamping", score)
        score = min(1.0, max(0.0, score))
    return float(score)


def load_prompt_set(path: str | Path) -> list[EvalPrompt]:
    """Load a line-delimited prompt set: {"prompt_id", "text", "tags"?}."""
    prompts: list[EvalPrompt] = []
    seen: set[str] = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        record = json.loads(line)
        prompt_id = str(record["prompt_id"])
        text = str(record["text"])
        if not text.strip():
            raise EvaluationError(f"prompt {prompt_id!r} (line {lineno}) has empty text")
        if prompt_id in seen:
            raise EvaluationError(f"duplicate prompt_id {prompt_id!r} (line {lineno})")
        seen.add(prompt_id)
        prompts.append(EvalPrompt(prompt_id=prompt_id, text=text, tags=tuple(record.get("tags", []))))
    return prompts


@dataclass
class EvalConfig:
    embedder: EmbedderConfig
    index: VectorIndex
    corpus: Corpus
    gateway: Gateway
    executor_env: ExecutorEnv
    out_dir: Path
    template: PromptTemplate | None = None
    scorer: object | None = None  # ScorerClient, ConstantScorer, or None
    k: int = DEFAULT_K
    budget: int = DEFAULT_BUDGET
    render: bool = True
    workers: int = 1  # bounded pool; executor/provider caps still apply
    progress: Callable[[int, int], None] | None = None


def run_eval(
    prompts: list[EvalPrompt],
    providers: list[str],
    conditions: list[str],
    cfg: EvalConfig,
) -> tuple[EvaluationReport, list[ItemResult]]:
    """Run the full protocol and write report artifacts under cfg.out_dir."""
    for cond in conditions:
        if cond not in CONDITIONS:
            raise EvaluationError(f"unknown condition {cond!r}")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    annotations: list[str] = [
        "alignment is computed only over items that compiled and rendered",
    ]
    scorer = cfg.scorer
    if scorer is None:
        annotations.append("compilation-only mode: no alignment scorer configured")

    work = [
        (prompt, provider_id, condition)
        for provider_id in providers
        for condition in conditions
        for prompt in prompts
    ]
    total = len(work)
    done = 0
    scorer_failed = False
    items: list[ItemResult] = []

    def run_one(unit) -> ItemResult:
        prompt, provider_id, condition = unit
        return _run_item(prompt, provider_id, condition, cfg, scorer if not scorer_failed else None, out_dir)

    if cfg.workers <= 1:
        mapped = map(run_one, work)
    else:
        from concurrent.futures import ThreadPoolExecutor

        pool = ThreadPoolExecutor(max_workers=cfg.workers)
        mapped = pool.map(run_one, work)
    for item in mapped:
        if item.note == "scorer_unreachable" and not scorer_failed:
            scorer_failed = True
            annotations.append("degraded to compilation-only: alignment scorer unreachable")
        items.append(item)
        done += 1
        if cfg.progress:
            cfg.progress(done, total)
    if cfg.workers > 1:
        pool.shutdown()
    items.sort(key=lambda r: (r.provider_id, r.condition, r.prompt_id))

    cells: dict[tuple[str, str], EvalCell] = {}
    for provider_id in providers:
        for condition in conditions:
            cell_items = [
                r for r in items if r.provider_id == provider_id and r.condition == condition
            ]
            aligned = [r for r in cell_items if r.alignment is not None]
            cells[(provider_id, condition)] = EvalCell(
                compilation_rate=compilation_rate(cell_items),
                alignment_mean=alignment_mean(cell_items) if aligned else None,
                n=len([r for r in cell_items if r.compiled is not None]),
            )

    scorer_id = getattr(scorer, "scorer_id", "") if scorer is not None and not scorer_failed else ""
    report = aggregate_report(cells, annotations=tuple(annotations), scorer_id=scorer_id)
    write_report_files(report, items, out_dir)
    return report, items


def _run_item(
    prompt: EvalPrompt,
    provider_id: str,
    condition: str,
    cfg: EvalConfig,
    scorer,
    out_dir: Path,
) -> ItemResult:
    item_id = f"{prompt.prompt_id}_{provider_id}_{condition}"
    item_dir = out_dir / "items" / item_id
    runner = SessionRunner(
        embedder=cfg.embedder,
        index=cfg.index,
        corpus=cfg.corpus,
        gateway=cfg.gateway,
        template=cfg.template,
        executor_env=cfg.executor_env,
        sessions_root=item_dir,
    )
    session = Session(
        session_id="run",
        provider_id=provider_id,
        mode=condition,
        settings=SessionSettings(k=cfg.k, budget=cfg.budget, execute=True, render=cfg.render),
    )
    turn = runner.generate(session, prompt.text)

    artifacts = {"turn": f"items/{item_id}/run/turn_1.json"}
    if turn.execution is None:
        # Pipeline never reached execution (retrieval or LLM failure):
        # counts as a failed compilation, not an exclusion.
        compiled: bool | None = False
    elif turn.execution.failure_kind == FAILURE_LAUNCHER:
        compiled = None  # infrastructure fault: excluded from the metric
    else:
        compiled = turn.execution.success

    alignment = None
    note = ""
    if compiled and turn.render_path and scorer is not None:
        artifacts["render"] = f"items/{item_id}/run/render_1.png"
        try:
            alignment = score_alignment(prompt.text, Path(turn.render_path), scorer)
        except (ScorerUnreachable, ScorerBadResponse):
            note = "scorer_unreachable"
    elif compiled and turn.render_path:
        artifacts["render"] = f"items/{item_id}/run/render_1.png"

    return ItemResult(
        prompt_id=prompt.prompt_id,
        provider_id=provider_id,
        condition=condition,
        compiled=compiled,
        alignment=alignment,
        artifacts=artifacts,
        note=note,
    )


def format_rate(value: float | None) -> str:
    return "" if value is None else f"{value:.1f}"


def format_alignment(value: float | None) -> str:
    return "" if value is None else f"{value:.3f}"


def report_to_csv(report: EvaluationReport) -> str:
    """CSV mirroring the results table: one row per provider plus Average."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["model", "compilation_base", "compilation_rag", "alignment_base", "alignment_rag"])

    def row_for(name: str, get_cell) -> list[str]:
        row = [name]
        for metric, fmt in (("compilation", format_rate), ("alignment", format_alignment)):
            for cond in CONDITIONS:
                if cond in report.conditions:
                    row.append(fmt(get_cell(cond, metric)))
                else:
                    row.append("")
        return row

    for provider in report.providers:
        writer.writerow(
            row_for(
                provider,
                lambda cond, metric: (
                    report.cells[(provider, cond)].compilation_rate
                    if metric == "compilation"
                    else report.cells[(provider, cond)].alignment_mean
                ),
            )
        )
    writer.writerow(row_for("Average", lambda cond, metric: report.averages[cond][metric]))
    return out.getvalue()


def report_to_table(report: EvaluationReport) -> str:
    """Human-readable table: Model | Compilation Base/RAG | Alignment Base/RAG."""
    header = f"{'Model':<20} {'Comp Base':>10} {'Comp RAG':>10} {'Align Base':>11} {'Align RAG':>10}"
    lines = [header, "-" * len(header)]

    def metric_columns(get) -> str:
        cols = []
        for cond in CONDITIONS:
            value = get(cond, "compilation") if cond in report.conditions else None
            cols.append(f"{format_rate(value) or '-':>10}")
        for cond in CONDITIONS:
            value = get(cond, "alignment") if cond in report.conditions else None
            cols.append(f"{format_alignment(value) or '-':>11}")
        return " ".join(cols)

    def cell_value(provider, cond, metric):
        cell = report.cells[(provider, cond)]
        return cell.compilation_rate if metric == "compilation" else cell.alignment_mean

    for provider in report.providers:
        lines.append(f"{provider:<20} {metric_columns(lambda c, m, _p=provider: cell_value(_p, c, m))}")
    lines.append(f"{'Average':<20} {metric_columns(lambda c, m: report.averages[c][m])}")
    if report.scorer_id:
        lines.append(f"scorer: {report.scorer_id}")
    for note in report.annotations:
        lines.append(f"note: {note}")
    return "\n".join(lines) + "\n"


def write_report_files(report: EvaluationReport, items: list[ItemResult], out_dir: Path) -> None:
    """Write report.csv, report.txt, and items.jsonl under out_dir."""
    out_dir = Path(out_dir)
    (out_dir / "report.csv").write_text(report_to_csv(report), encoding="utf-8")
    (out_dir / "report.txt").write_text(report_to_table(report), encoding="utf-8")
    with (out_dir / "items.jsonl").open("w", encoding="utf-8") as fh:
        for item in sorted(items, key=lambda r: (r.prompt_id, r.provider_id, r.condition)):
            fh.write(
                json.dumps(
                    {
                        "prompt_id": item.prompt_id,
                        "provider_id": item.provider_id,
                        "condition": item.condition,
                        "compiled": item.compiled,
                        "alignment": item.alignment,
                        "artifacts": item.artifacts,
                        "note": item.note,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
