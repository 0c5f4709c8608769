"""Query-time pipeline: embed, search, resolve hits, assemble the prompt.

Prompt budgets are counted in a deterministic proxy unit (characters / 4,
rounded up). When a prompt overflows, whole exemplar blocks are dropped from
the lowest rank upward; code is never truncated mid-block because partial
code is worse than fewer exemplars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .corpus import Corpus, CorpusEntry
from .embedding import EmbedderConfig, embed_text
from .errors import DomainError
from .index import SearchHit, VectorIndex

DEFAULT_K = 3
DEFAULT_BUDGET = 8192  # budget units (~32k characters)

MODE_BASE = "base"
MODE_RAG = "rag"

DEFAULT_PREAMBLE = (
    "You are an assistant that writes Blender Python scripts for 3D objects. "
    "Respond with exactly one complete, executable Python script inside a single "
    "fenced code block. Do not write any prose outside the code block. The script "
    "must import bpy, build the requested object from scratch, and run without errors."
)

_PLACEHOLDERS = ("{{preamble}}", "{{exemplars}}", "{{request}}")


class RetrievalError(DomainError):
    pass


class EmptyQuery(RetrievalError):
    pass


class EmptyRequest(RetrievalError):
    pass


class DanglingEntryId(RetrievalError):
    pass


class BudgetTooSmall(RetrievalError):
    pass


@dataclass(frozen=True)
class RetrievedExemplar:
    """One resolved hit: ranking info, entry metadata, and the script body."""

    hit: SearchHit
    entry: CorpusEntry
    code: str


@dataclass(frozen=True)
class RetrievalContext:
    query_text: str
    hits: tuple[RetrievedExemplar, ...]
    k: int


@dataclass(frozen=True)
class ExemplarBlock:
    description: str
    code: str


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt skeleton with {{preamble}}, {{exemplars}}, {{request}} slots."""

    text: str

    def __post_init__(self):
        missing = [p for p in _PLACEHOLDERS if p not in self.text]
        if missing:
            raise RetrievalError(f"template is missing placeholders: {missing}")

    def render(self, preamble: str, exemplars: str, request: str) -> str:
        return (
            self.text.replace("{{preamble}}", preamble)
            .replace("{{exemplars}}", exemplars)
            .replace("{{request}}", request)
        )


@dataclass(frozen=True)
class PromptContext:
    system_preamble: str
    exemplar_blocks: tuple[ExemplarBlock, ...]
    user_request: str
    mode: str  # MODE_BASE or MODE_RAG
    token_budget: int
    rendered: str


def load_template(path: str | Path) -> PromptTemplate:
    return PromptTemplate(Path(path).read_text(encoding="utf-8"))


def default_template() -> PromptTemplate:
    text = resources.files("rag3d").joinpath("templates/default_prompt.txt").read_text(encoding="utf-8")
    return PromptTemplate(text)


def budget_units(text: str) -> int:
    """Token-count proxy: characters / 4, rounded up."""
    return math.ceil(len(text) / 4)


def retrieve(
    query: str,
    k: int,
    embedder: EmbedderConfig,
    index: VectorIndex,
    corpus: Corpus,
) -> RetrievalContext:
    """Embed the query and resolve the top-k hits to corpus entries."""
    if not query or not query.strip():
        raise EmptyQuery("query is empty")
    if k < 1:
        raise RetrievalError(f"k must be >= 1, got {k}")
    vector = embed_text(query, embedder)
    hits = index.search_top_k(vector, k)
    entries = corpus.by_id()
    resolved = []
    for hit in hits:
        entry = entries.get(hit.entry_id)
        if entry is None:
            raise DanglingEntryId(f"index references {hit.entry_id!r} which is absent from the corpus")
        resolved.append(RetrievedExemplar(hit=hit, entry=entry, code=corpus.code_text(entry)))
    return RetrievalContext(query_text=query, hits=tuple(resolved), k=k)


def format_exemplar_block(rank: int, description: str, code: str) -> str:
    """Description first, then the script in a fenced block, then a separator."""
    return f"Example {rank}: {description}\n```python\n{code}\n```\n---\n"


def assemble_prompt(
    ctx: RetrievalContext | None,
    user_request: str,
    template: PromptTemplate | None = None,
    budget: int = DEFAULT_BUDGET,
    preamble: str = DEFAULT_PREAMBLE,
) -> PromptContext:
    """Build the final prompt; rag mode injects exemplars in rank order."""
    if not user_request or not user_request.strip():
        raise EmptyRequest("user request is empty")
    if template is None:
        template = default_template()

    blocks: list[ExemplarBlock] = []
    block_texts: list[str] = []
    if ctx is not None:
        for exemplar in ctx.hits:
            blocks.append(ExemplarBlock(description=exemplar.entry.description, code=exemplar.code))
            block_texts.append(
                format_exemplar_block(exemplar.hit.rank, exemplar.entry.description, exemplar.code)
            )

    def render(n_blocks: int) -> str:
        return template.render(preamble, "".join(block_texts[:n_blocks]), user_request)

    kept = len(block_texts)
    rendered = render(kept)
    while budget_units(rendered) > budget and kept > 0:
        kept -= 1  # drop whole blocks from the lowest rank upward
        rendered = render(kept)
    if budget_units(rendered) > budget:
        raise BudgetTooSmall(
            f"budget {budget} cannot fit preamble + request ({budget_units(rendered)} units)"
        )

    return PromptContext(
        system_preamble=preamble,
        exemplar_blocks=tuple(blocks[:kept]),
        user_request=user_request,
        mode=MODE_RAG if ctx is not None else MODE_BASE,
        token_budget=budget,
        rendered=rendered,
    )
