"""Fusion (against an independent recomputation), reranking, hybrid search,
and context assembly."""

from __future__ import annotations

import random
from dataclasses import replace

import pytest

from circuitlit.corpus import load_bundle
from circuitlit.errors import ProviderError
from circuitlit.index import SearchHit
from circuitlit.providers import FnRerankProvider, IdentityRerankProvider
from circuitlit.retrieve import (
    FusionConfig,
    assemble_context,
    estimate_tokens,
    fuse,
    hybrid_search,
    rerank,
)
from circuitlit.tools import SearchEngine

from conftest import make_manifest


def hit(record_id: str, rank: int, score: float = 0.0, retriever: str = "keyword") -> SearchHit:
    return SearchHit(
        record_id=record_id,
        modality="text",
        score=score or 1.0 / rank,
        rank=rank,
        retriever=retriever,
        snippet=f"snippet {record_id}",
        metadata={"title": record_id, "doc_id": record_id},
    )


def ranked(ids: list[str], retriever: str) -> list[SearchHit]:
    return [hit(r, i, retriever=retriever) for i, r in enumerate(ids, 1)]


def rrf_reference(
    kw_ids: list[str], sem_ids: list[str], w_kw: float, w_sem: float, rrf_k: float
) -> dict[str, float]:
    """Independent weighted-RRF recomputation."""
    scores: dict[str, float] = {}
    for i, rid in enumerate(kw_ids, 1):
        scores[rid] = scores.get(rid, 0.0) + w_kw / (rrf_k + i)
    for i, rid in enumerate(sem_ids, 1):
        scores[rid] = scores.get(rid, 0.0) + w_sem / (rrf_k + i)
    return scores


class TestFuse:
    def test_double_rank1_dominates(self):
        cfg = FusionConfig()
        fused = fuse(ranked(["a", "b"], "keyword"), ranked(["a", "c"], "semantic"), cfg)
        assert fused[0].record_id == "a"

    def test_hand_computed_example(self):
        cfg = FusionConfig(w_semantic=0.8, w_keyword=0.2, rrf_k=60)
        fused = fuse(ranked(["A", "B"], "keyword"), ranked(["B", "C"], "semantic"), cfg)
        assert [h.record_id for h in fused] == ["B", "C", "A"]
        scores = {h.record_id: h.score for h in fused}
        assert scores["B"] == pytest.approx(0.8 / 61 + 0.2 / 62, abs=1e-12)
        assert scores["C"] == pytest.approx(0.8 / 62, abs=1e-12)
        assert scores["A"] == pytest.approx(0.2 / 61, abs=1e-12)

    def test_zero_keyword_weight_degenerates_to_semantic_order(self):
        cfg = FusionConfig(w_semantic=0.7, w_keyword=0.0)
        fused = fuse(ranked(["x", "y", "z"], "keyword"), ranked(["p", "q"], "semantic"), cfg)
        assert [h.record_id for h in fused][:2] == ["p", "q"]
        # keyword-only records score 0 and sort last, by record id
        assert [h.record_id for h in fused][2:] == ["x", "y", "z"]

    def test_matches_reference_on_random_lists(self):
        rng = random.Random(42)
        universe = [f"r{i:02d}" for i in range(30)]
        for _ in range(200):
            kw_ids = rng.sample(universe, rng.randint(0, 20))
            sem_ids = rng.sample(universe, rng.randint(0, 20))
            w_kw, w_sem = rng.uniform(0, 2), rng.uniform(0.01, 2)
            rrf_k = rng.uniform(1, 100)
            cfg = FusionConfig(w_semantic=w_sem, w_keyword=w_kw, rrf_k=rrf_k, prefuse_k=60, final_k=1)
            fused = fuse(ranked(kw_ids, "keyword"), ranked(sem_ids, "semantic"), cfg)
            expected = rrf_reference(kw_ids, sem_ids, w_kw, w_sem, rrf_k)
            assert [h.record_id for h in fused] == sorted(expected, key=lambda r: (-expected[r], r))
            for h in fused:
                assert h.score == pytest.approx(expected[h.record_id], abs=1e-12)

    def test_weight_scaling_preserves_order(self):
        rng = random.Random(7)
        universe = [f"r{i}" for i in range(15)]
        for _ in range(50):
            kw_ids = rng.sample(universe, 10)
            sem_ids = rng.sample(universe, 10)
            base = FusionConfig(w_semantic=0.8, w_keyword=0.2)
            for c in (0.001, 3.7, 250.0):
                scaled = FusionConfig(w_semantic=0.8 * c, w_keyword=0.2 * c)
                a = [h.record_id for h in fuse(ranked(kw_ids, "keyword"), ranked(sem_ids, "semantic"), base)]
                b = [h.record_id for h in fuse(ranked(kw_ids, "keyword"), ranked(sem_ids, "semantic"), scaled)]
                assert a == b

    def test_truncates_to_prefuse_k(self):
        cfg = FusionConfig(prefuse_k=3, final_k=2)
        fused = fuse(ranked([f"k{i}" for i in range(10)], "keyword"), [], cfg)
        assert len(fused) == 3


class TestRerank:
    def test_identity_fallback_preserves_order(self):
        hits = ranked(["a", "b", "c"], "fused")
        out = rerank("q", hits, IdentityRerankProvider(), final_k=2)
        assert [h.record_id for h in out] == ["a", "b"]
        assert all(h.retriever == "reranked" for h in out)

    def test_scripted_reversal(self):
        hits = ranked(["a", "b", "c"], "fused")
        reverser = FnRerankProvider(lambda q, docs: list(range(len(docs)))[::-1])
        out = rerank("q", hits, reverser, final_k=3)
        assert [h.record_id for h in out] == ["c", "b", "a"]
        assert [h.rank for h in out] == [1, 2, 3]
        for prev, cur in zip(out, out[1:]):
            assert prev.score > cur.score

    def test_provider_error_degrades_to_fused_order(self, caplog):
        hits = ranked(["a", "b", "c"], "fused")

        def boom(q, docs):
            raise ProviderError("timeout", retryable=True)

        with caplog.at_level("WARNING"):
            out = rerank("q", hits, FnRerankProvider(boom), final_k=2)
        assert [h.record_id for h in out] == ["a", "b"]
        assert any("degraded" in rec.message for rec in caplog.records)

    def test_bad_permutation_treated_as_failure(self):
        hits = ranked(["a", "b"], "fused")
        out = rerank("q", hits, FnRerankProvider(lambda q, d: [0, 0]), final_k=2)
        assert [h.record_id for h in out] == ["a", "b"]


class TestHybridSearch:
    def test_empty_index(self, engine):
        assert engine.search("anything") == []

    def test_keyword_rescue_of_rare_literal_token(self, tmp_path, pipeline, engine):
        # Decoys share most of the query's trigrams (fooling the fallback
        # embedder) but none of its exact tokens (the tokenizer does not
        # stem, so BM25 never sees them). Only the target carries the rare
        # literal token; the keyword path must rescue it into the top k.
        query = "reference design consuming 52.5-nW exactly"
        decoy_page = (
            "references designs consumers exacting consumption referenced "
            "designers exactness"
        )
        for i in range(8):
            make_manifest(
                tmp_path,
                doc_id=f"decoy{i}",
                title=f"Decoy {i}",
                pages=[f"{decoy_page} (variant {i})"],
                name=f"decoy{i}.json",
            )
            pipeline.ingest_bundle(load_bundle(tmp_path / f"decoy{i}.json"))
        make_manifest(
            tmp_path,
            doc_id="target",
            title="Target",
            pages=["The measured draw is 52.5-nW under nominal bias."],
            name="target.json",
        )
        pipeline.ingest_bundle(load_bundle(tmp_path / "target.json"))

        # guard the engineering: decoys are invisible to the keyword path
        kw_hits = engine.index.keyword_search(query, k=10)
        assert [h.record_id for h in kw_hits] == ["target#c0"]

        sem_only = replace(engine.fusion, w_keyword=0.0, final_k=5)
        sem_hits = hybrid_search(query, engine.index, engine.embedder, sem_only, engine.reranker)
        assert all(not h.record_id.startswith("target") for h in sem_hits), (
            "fixture drift: the embedder no longer misranks the target"
        )
        hybrid_hits = engine.search(query, k=5)
        assert any(h.record_id.startswith("target") for h in hybrid_hits)

    def test_image_record_retrievable(self, tmp_path, pipeline, engine):
        make_manifest(
            tmp_path,
            doc_id="imgdoc",
            title="Schematic Paper",
            pages=["Text page about architecture."],
            images=1,
            name="imgdoc.json",
        )
        pipeline.ingest_bundle(load_bundle(tmp_path / "imgdoc.json"))
        hits = engine.search("core schematic figure", k=3)
        image_hits = [h for h in hits if h.modality == "image"]
        assert image_hits and image_hits[0].metadata.get("image_path")

    def test_deterministic(self, six_paper_engine):
        a = six_paper_engine.search("bandgap reference power", k=5)
        b = six_paper_engine.search("bandgap reference power", k=5)
        assert a == b

    def test_hits_resolve_to_records(self, six_paper_engine):
        for h in six_paper_engine.search("oscillator", k=10):
            rec = six_paper_engine.index.get(h.record_id)
            assert rec is not None
            assert rec.metadata.get("title") == h.metadata.get("title")


class TestAssembleContext:
    def test_both_fit(self):
        hits = [hit("a", 1), hit("b", 2)]
        hits = [replace(h, snippet="x" * 1600) for h in hits]  # 400 tokens each
        block = assemble_context(hits, budget_tokens=1000)
        assert len(block.entries) == 2
        assert block.token_estimate == 800
        assert [e.citation_tag for e in block.entries] == [1, 2]

    def test_greedy_cut(self):
        hits = [replace(hit("a", 1), snippet="x" * 1600), replace(hit("b", 2), snippet="y" * 1600)]
        block = assemble_context(hits, budget_tokens=500)
        assert [e.record_id for e in block.entries] == ["a"]

    def test_degenerate_budget(self):
        hits = [replace(hit("a", 1), snippet="x" * 1600)]
        block = assemble_context(hits, budget_tokens=10)
        assert block.entries == ()
        assert block.token_estimate == 0

    def test_image_entry_includes_path_cost(self):
        h = SearchHit(
            record_id="d#i:f",
            modality="image",
            score=1.0,
            rank=1,
            retriever="reranked",
            snippet="a" * 40,
            metadata={"image_path": "/tmp/f.pgm", "doc_id": "d"},
        )
        block = assemble_context([h], budget_tokens=100)
        assert block.entries[0].image_path == "/tmp/f.pgm"
        assert block.token_estimate == estimate_tokens("a" * 40 + " /tmp/f.pgm")
