"""Unified index: BM25 against the textbook oracle, exhaustive vector scan
against a brute-force oracle, persistence round-trips."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circuitlit.embedding import HashEmbeddingProvider, Vector, cosine, embed_batch
from circuitlit.errors import CorruptIndex, DimMismatch
from circuitlit.index import Bm25Params, Index, IndexRecord, tokenize


def bm25_reference(
    corpus: dict[str, str], query: str, k1: float = 1.2, b: float = 0.75
) -> dict[str, float]:
    """Direct textbook evaluation, one document at a time (the oracle).

    idf(t) = ln((N - df + 0.5) / (df + 0.5)); score sums idf * saturated tf
    with length normalization; documents sharing no query term are excluded.
    """
    docs = {doc_id: tokenize(text) for doc_id, text in corpus.items()}
    n = len(docs)
    avgdl = sum(len(toks) for toks in docs.values()) / n
    terms = sorted(set(tokenize(query)))
    scores = {}
    for doc_id, toks in docs.items():
        score = 0.0
        matched = False
        for term in terms:
            tf = toks.count(term)
            if tf == 0:
                continue
            matched = True
            df = sum(1 for other in docs.values() if term in other)
            idf = math.log((n - df + 0.5) / (df + 0.5))
            score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(toks) / avgdl))
        if matched:
            scores[doc_id] = score
    return scores


def make_index(corpus: dict[str, str], embedder=None) -> Index:
    embedder = embedder or HashEmbeddingProvider()
    vectors = embed_batch(list(corpus.values()), embedder)
    idx = Index()
    idx.upsert(
        [
            IndexRecord(
                record_id=doc_id,
                doc_id=doc_id,
                modality="text",
                body=text,
                vector=vec,
                metadata={"title": doc_id},
            )
            for (doc_id, text), vec in zip(corpus.items(), vectors)
        ]
    )
    return idx


HAND_CORPORA = [
    {
        "d1": "bandgap reference circuit design",
        "d2": "ring oscillator phase noise",
        "d3": "reference current for bandgap bias",
    },
    {
        "a": "low power reference",
        "b": "low low low power",
        "c": "power amplifier design notes",
        "d": "subthreshold leakage reference power",
    },
    {
        "p1": "varactor coupling quadrature oscillator",
        "p2": "oscillator oscillator oscillator",
    },
    {
        "x1": "one common word corpus",
        "x2": "another common word set",
        "x3": "totally different tokens here",
        "x4": "common appears twice common",
        "x5": "word salad word word",
    },
    {
        "s1": "curvature corrected bandgap with ptat generator",
        "s2": "ptat voltage generator weak inversion",
        "s3": "dtat complement for trimming",
        "s4": "bandgap ptat dtat combined trim",
        "s5": "oscillator unrelated doc",
        "s6": "yet another unrelated document text",
    },
]


class TestKeywordSearch:
    def test_exclusive_term(self):
        idx = make_index({"d1": "bandgap reference circuit", "d2": "ring oscillator"})
        hits = idx.keyword_search("bandgap", k=10)
        assert [h.record_id for h in hits] == ["d1"]

    @pytest.mark.parametrize("corpus", HAND_CORPORA)
    def test_matches_textbook_oracle(self, corpus):
        idx = make_index(corpus)
        for query in ("reference circuit", "power", "oscillator", "common word", "ptat bandgap"):
            expected = bm25_reference(corpus, query)
            hits = idx.keyword_search(query, k=len(corpus))
            got = {h.record_id: h.score for h in hits}
            assert set(got) == set(expected)
            for doc_id, score in expected.items():
                assert got[doc_id] == pytest.approx(score, abs=1e-9)

    def test_empty_query(self):
        idx = make_index({"d1": "anything"})
        assert idx.keyword_search("", k=5) == []

    def test_rank_invariant(self):
        idx = make_index(HAND_CORPORA[4])
        hits = idx.keyword_search("bandgap ptat", k=10)
        assert [h.rank for h in hits] == list(range(1, len(hits) + 1))
        for prev, cur in zip(hits, hits[1:]):
            assert prev.score > cur.score or (
                prev.score == cur.score and prev.record_id < cur.record_id
            )

    def test_monotonic_in_term_frequency(self):
        # Same doc with the query term repeated more often scores higher,
        # holding document length fixed. (Needs N > 2*df or the smoothed
        # idf collapses to zero.)
        others = {
            "o1": "unrelated text entirely",
            "o2": "more filler content here",
            "o3": "nothing shared at all",
        }
        low = {"doc": "ptat pad pad pad pad", **others}
        high = {"doc": "ptat ptat pad pad pad", **others}
        s_low = bm25_reference(low, "ptat")["doc"]
        s_high = bm25_reference(high, "ptat")["doc"]
        assert (
            make_index(high).keyword_search("ptat", 1)[0].score
            == pytest.approx(s_high, abs=1e-9)
        )
        assert s_high > s_low


class TestSemanticSearch:
    def test_self_match(self):
        idx = make_index({"d1": "alpha beta gamma", "d2": "totally different"})
        rec = idx.get("d1")
        hits = idx.semantic_search(rec.vector, k=1)
        assert hits[0].record_id == "d1"
        assert hits[0].score == pytest.approx(1.0, abs=1e-9)

    def test_k_clamped(self):
        idx = make_index({"a": "one", "b": "two"})
        assert len(idx.semantic_search(idx.get("a").vector, k=10)) == 2

    def test_matches_bruteforce_scan(self, embedder):
        corpus = {f"r{i}": text for i, text in enumerate(
            ["alpha beta", "beta gamma", "gamma delta", "delta epsilon", "epsilon zeta"]
        )}
        idx = make_index(corpus, embedder)
        (qvec,) = embed_batch(["beta gamma delta"], embedder)
        # Oracle: plain cosine against every record, sorted the same way.
        expected = sorted(
            ((cosine(qvec, idx.get(r).vector), r) for r in corpus),
            key=lambda t: (-t[0], t[1]),
        )
        hits = idx.semantic_search(qvec, k=len(corpus))
        assert [h.record_id for h in hits] == [r for _, r in expected]
        for hit, (score, _) in zip(hits, expected):
            assert hit.score == pytest.approx(score, abs=1e-9)

    def test_dim_mismatch(self):
        idx = make_index({"a": "one"})
        with pytest.raises(DimMismatch):
            idx.semantic_search(Vector((1.0, 0.0)), k=1)


class TestUpsert:
    def test_counts(self, embedder):
        idx = make_index({"a": "one", "b": "two", "c": "three"}, embedder)
        assert len(idx) == 3
        (vec,) = embed_batch(["replacement text"], embedder)
        stats = idx.upsert(
            [IndexRecord(record_id="b", doc_id="b", modality="text", body="replacement text", vector=vec)]
        )
        assert (stats.added, stats.replaced, stats.total) == (0, 1, 3)
        assert idx.get("b").body == "replacement text"
        # postings must reflect the replacement
        assert [h.record_id for h in idx.keyword_search("replacement", 5)] == ["b"]
        assert idx.keyword_search("two", 5) == []

    def test_dim_mismatch(self):
        idx = make_index({"a": "one"})
        with pytest.raises(DimMismatch):
            idx.upsert(
                [IndexRecord(record_id="z", doc_id="z", modality="text", body="x", vector=Vector((1.0,)))]
            )

    def test_image_record_requires_path(self, embedder):
        (vec,) = embed_batch(["caption"], embedder)
        with pytest.raises(ValueError):
            IndexRecord(record_id="i", doc_id="d", modality="image", body="caption", vector=vec)


class TestPersistence:
    def test_round_trip_preserves_search(self, tmp_path, embedder):
        corpus = {f"doc{i}": f"text number {i} about topic {i % 3}" for i in range(10)}
        idx = make_index(corpus, embedder)
        path = tmp_path / "store.idx"
        idx.save(path)
        loaded = Index.load(path)
        assert len(loaded) == len(idx)
        for query in ("text number", "topic", "about"):
            assert idx.keyword_search(query, 10) == loaded.keyword_search(query, 10)
        (qvec,) = embed_batch(["topic text"], embedder)
        assert idx.semantic_search(qvec, 10) == loaded.semantic_search(qvec, 10)

    def test_truncated_file(self, tmp_path):
        idx = make_index({"a": "one two"})
        path = tmp_path / "store.idx"
        idx.save(path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 7])
        with pytest.raises(CorruptIndex):
            Index.load(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "store.idx"
        path.write_bytes(b'{"magic": "NOPE", "version": 1}\n')
        with pytest.raises(CorruptIndex):
            Index.load(path)

    def test_empty_index(self, tmp_path):
        idx = Index()
        path = tmp_path / "empty.idx"
        idx.save(path)
        loaded = Index.load(path)
        assert len(loaded) == 0


class TestParams:
    def test_bm25_params_validation(self):
        with pytest.raises(ValueError):
            Bm25Params(k1=0.0)
        with pytest.raises(ValueError):
            Bm25Params(b=1.5)

    @settings(max_examples=30, deadline=None)
    @given(
        st.dictionaries(
            st.text(alphabet="abcdefg", min_size=2, max_size=4),
            st.lists(st.sampled_from(["ref", "osc", "amp", "bias", "trim"]), min_size=1, max_size=6).map(" ".join),
            min_size=1,
            max_size=6,
        ),
        st.sampled_from(["ref bias", "osc", "amp trim ref", "bias bias"]),
    )
    def test_oracle_property(self, corpus, query):
        idx = make_index(corpus)
        expected = bm25_reference(corpus, query)
        got = {h.record_id: h.score for h in idx.keyword_search(query, k=len(corpus))}
        assert set(got) == set(expected)
        for doc_id in expected:
            assert got[doc_id] == pytest.approx(expected[doc_id], abs=1e-9)
