import math

import pytest

from rag3d.corpus import Corpus
from rag3d.index import EmptyIndex, VectorIndex
from rag3d.retrieval import (
    BudgetTooSmall,
    DanglingEntryId,
    EmptyQuery,
    EmptyRequest,
    MODE_BASE,
    MODE_RAG,
    PromptTemplate,
    RetrievalError,
    assemble_prompt,
    budget_units,
    default_template,
    format_exemplar_block,
    load_template,
    retrieve,
)


class TestRetrieve:
    def test_default_k_three_exemplars(self, sample_corpus, sample_index, embedder):
        ctx = retrieve("a comfortable seat for the living room", 3, embedder, sample_index, sample_corpus)
        assert len(ctx.hits) == 3
        assert [ex.hit.rank for ex in ctx.hits] == [1, 2, 3]

    def test_stored_description_self_match(self, sample_corpus, sample_index, embedder):
        entry = sample_corpus.entries[0]
        ctx = retrieve(entry.description, 3, embedder, sample_index, sample_corpus)
        assert ctx.hits[0].entry.id == entry.id
        assert ctx.hits[0].hit.score == pytest.approx(1.0, abs=1e-9)

    def test_code_resolved_from_corpus(self, sample_corpus, sample_index, embedder):
        ctx = retrieve("tall tree with green crown", 2, embedder, sample_index, sample_corpus)
        for exemplar in ctx.hits:
            assert exemplar.code == sample_corpus.code_text(exemplar.entry)
            assert exemplar.code.startswith("import bpy")

    def test_empty_query(self, sample_corpus, sample_index, embedder):
        with pytest.raises(EmptyQuery):
            retrieve("  ", 3, embedder, sample_index, sample_corpus)

    def test_empty_index(self, sample_corpus, embedder):
        with pytest.raises(EmptyIndex):
            retrieve("chair", 3, embedder, VectorIndex(), sample_corpus)

    def test_dangling_entry_id(self, sample_corpus, sample_index, embedder):
        # Index built over the full corpus, then entries dropped: drift.
        pruned = Corpus(root=sample_corpus.root, entries=sample_corpus.entries[:2], categories=sample_corpus.categories)
        with pytest.raises(DanglingEntryId):
            retrieve("a weathered granite boulder", 5, embedder, sample_index, pruned)

    def test_k_must_be_positive(self, sample_corpus, sample_index, embedder):
        with pytest.raises(RetrievalError):
            retrieve("chair", 0, embedder, sample_index, sample_corpus)


class TestAssemblePrompt:
    def test_rag_blocks_in_rank_order_verbatim(self, sample_corpus, sample_index, embedder):
        ctx = retrieve("a wooden chair", 3, embedder, sample_index, sample_corpus)
        prompt = assemble_prompt(ctx, "a short three-legged stool")
        assert prompt.mode == MODE_RAG
        assert len(prompt.exemplar_blocks) == 3
        cursor = 0
        for exemplar in ctx.hits:
            position = prompt.rendered.find(exemplar.entry.description)
            assert position >= cursor  # rank order preserved
            cursor = position
            assert exemplar.code in prompt.rendered  # code injected unmodified

    def test_base_mode_no_blocks(self):
        prompt = assemble_prompt(None, "a short stool")
        assert prompt.mode == MODE_BASE
        assert prompt.exemplar_blocks == ()
        assert "Example 1:" not in prompt.rendered

    def test_budget_drops_lowest_ranked_whole_block(self, sample_corpus, sample_index, embedder):
        ctx = retrieve("a wooden chair", 3, embedder, sample_index, sample_corpus)
        template = default_template()
        request = "a short three-legged stool"

        # Oracle: compute the exact rendered size with 2 of 3 blocks, then
        # set the budget to exactly that many units.
        blocks = [
            format_exemplar_block(ex.hit.rank, ex.entry.description, ex.code) for ex in ctx.hits
        ]
        with_two = template.render(
            assemble_prompt(None, request).system_preamble, "".join(blocks[:2]), request
        )
        budget = budget_units(with_two)
        with_three = template.render(
            assemble_prompt(None, request).system_preamble, "".join(blocks), request
        )
        assert budget_units(with_three) > budget  # sanity: three blocks overflow

        prompt = assemble_prompt(ctx, request, budget=budget)
        assert len(prompt.exemplar_blocks) == 2
        assert prompt.exemplar_blocks[0].description == ctx.hits[0].entry.description
        assert prompt.exemplar_blocks[1].description == ctx.hits[1].entry.description
        assert ctx.hits[2].entry.description not in prompt.rendered
        assert budget_units(prompt.rendered) <= budget

    def test_budget_too_small(self):
        with pytest.raises(BudgetTooSmall):
            assemble_prompt(None, "a request that cannot fit", budget=5)

    def test_monotone_budget_never_removes_blocks(self, sample_corpus, sample_index, embedder):
        ctx = retrieve("a wooden chair", 3, embedder, sample_index, sample_corpus)
        request = "a short stool"
        kept_counts = []
        base_units = budget_units(assemble_prompt(None, request).rendered)
        for budget in range(base_units, base_units + 900, 37):
            prompt = assemble_prompt(ctx, request, budget=budget)
            kept_counts.append(len(prompt.exemplar_blocks))
        assert kept_counts == sorted(kept_counts)

    def test_base_sections_shared_with_rag(self, sample_corpus, sample_index, embedder):
        ctx = retrieve("a wooden chair", 3, embedder, sample_index, sample_corpus)
        request = "a short stool"
        base = assemble_prompt(None, request)
        rag = assemble_prompt(ctx, request)
        assert base.system_preamble == rag.system_preamble
        assert base.rendered.startswith(base.system_preamble)
        assert rag.rendered.startswith(base.system_preamble)
        # The request section survives identically in both renderings.
        assert base.rendered.splitlines()[-2:] == rag.rendered.splitlines()[-2:]

    def test_empty_request(self):
        with pytest.raises(EmptyRequest):
            assemble_prompt(None, "  ")

    def test_budget_respected(self, sample_corpus, sample_index, embedder):
        ctx = retrieve("a wooden chair", 3, embedder, sample_index, sample_corpus)
        prompt = assemble_prompt(ctx, "a stool", budget=100000)
        assert budget_units(prompt.rendered) <= prompt.token_budget


class TestTemplate:
    def test_budget_units_definition(self):
        assert budget_units("") == 0
        assert budget_units("abcd") == 1
        assert budget_units("abcde") == 2
        assert budget_units("x" * 400) == 100
        assert budget_units("x" * 401) == math.ceil(401 / 4)

    def test_template_requires_placeholders(self):
        with pytest.raises(RetrievalError):
            PromptTemplate("no placeholders here")

    def test_load_template_from_file(self, tmp_path):
        path = tmp_path / "custom.txt"
        path.write_text("{{preamble}}|{{exemplars}}|{{request}}", encoding="utf-8")
        template = load_template(path)
        assert template.render("P", "E", "R") == "P|E|R"

    def test_default_template_ships(self):
        template = default_template()
        rendered = template.render("PRE", "EX", "REQ")
        assert "PRE" in rendered and "EX" in rendered and "REQ" in rendered
