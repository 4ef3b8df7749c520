"""Bundle loading, chunking (with the reconstruction oracle), contextual
caching, and image description."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circuitlit.corpus import (
    ChunkConfig,
    ContextCache,
    DocumentBundle,
    chunk_document,
    context_cache_key,
    contextualize,
    describe_image,
    load_bundle,
)
from circuitlit.errors import (
    DuplicateImageId,
    EmptyDocument,
    MissingField,
    UnreadableImage,
)
from circuitlit.providers import FallbackChatProvider, ScriptedChatProvider

from conftest import make_manifest


def reconstruct(chunks) -> str:
    """Oracle: strip each chunk's overlap prefix and concatenate."""
    return "".join(c.text[c.overlap_prefix_len :] for c in chunks)


def text_bundle(text: str, doc_id: str = "d") -> DocumentBundle:
    return DocumentBundle(doc_id=doc_id, title="T", source_uri="", pages=(text,))


class TestLoadBundle:
    def test_field_mapping(self, tmp_path):
        path = make_manifest(tmp_path, images=1)
        bundle = load_bundle(path)
        assert len(bundle.pages) == 2
        assert len(bundle.images) == 1
        assert bundle.images[0].page_no == 1
        assert bundle.images[0].path.is_file()

    def test_missing_doc_id(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"title": "x", "pages": ["p"]}))
        with pytest.raises(MissingField) as exc:
            load_bundle(path)
        assert exc.value.key == "doc_id"

    def test_unreadable_image(self, tmp_path):
        manifest = {
            "doc_id": "d",
            "title": "t",
            "pages": ["p"],
            "images": [{"image_id": "i1", "path": "nope.pgm", "page_no": 1}],
        }
        path = tmp_path / "m.json"
        path.write_text(json.dumps(manifest))
        with pytest.raises(UnreadableImage) as exc:
            load_bundle(path)
        assert "nope.pgm" in exc.value.key

    def test_duplicate_image_id(self, tmp_path):
        img = make_manifest(tmp_path, images=1)  # creates doc1_fig1.pgm
        manifest = json.loads(img.read_text())
        manifest["images"].append(dict(manifest["images"][0]))
        img.write_text(json.dumps(manifest))
        with pytest.raises(DuplicateImageId):
            load_bundle(img)


class TestChunking:
    def test_single_small_paragraph(self):
        chunks = chunk_document(text_bundle("x" * 100), ChunkConfig(4000, 400))
        assert len(chunks) == 1
        assert chunks[0].overlap_prefix_len == 0
        assert chunks[0].text == "x" * 100

    def test_paragraph_boundaries_and_reconstruction(self):
        paragraphs = ["a" * 1500, "b" * 1500, "c" * 1500]
        bundle = text_bundle("\n\n".join(paragraphs))
        chunks = chunk_document(bundle, ChunkConfig(2000, 200))
        assert len(chunks) == 3
        full = bundle.full_text
        for chunk in chunks:
            core_start = chunk.char_span[0] + chunk.overlap_prefix_len
            # Each core starts exactly where a paragraph starts.
            assert core_start == 0 or full[core_start - 1] == "\n"
            assert chunk.text == full[chunk.char_span[0] : chunk.char_span[1]]
        assert reconstruct(chunks) == full

    def test_oversize_paragraph_character_fallback(self):
        bundle = text_bundle("y" * 5000)
        chunks = chunk_document(bundle, ChunkConfig(2000, 200))
        assert len(chunks) >= 3
        for prev, cur in zip(chunks, chunks[1:]):
            assert cur.overlap_prefix_len == 200
            assert prev.text[-200:] == cur.text[:200]
        assert reconstruct(chunks) == bundle.full_text

    def test_empty_document(self):
        with pytest.raises(EmptyDocument):
            chunk_document(text_bundle("   \n \n  "), ChunkConfig())

    def test_max_length_respected(self):
        bundle = text_bundle("word " * 4000)
        for chunk in chunk_document(bundle, ChunkConfig(1000, 100)):
            assert len(chunk.text) <= 1000
            assert chunk.overlap_prefix_len <= 100

    def test_determinism(self, bundle):
        a = chunk_document(bundle, ChunkConfig(120, 20))
        b = chunk_document(bundle, ChunkConfig(120, 20))
        assert a == b

    @settings(max_examples=60, deadline=None)
    @given(
        paragraphs=st.lists(
            st.text(
                alphabet=st.sampled_from("ab \n"), min_size=1, max_size=300
            ).filter(lambda s: s.strip()),
            min_size=1,
            max_size=8,
        ),
        max_chars=st.integers(min_value=50, max_value=500),
        overlap=st.integers(min_value=0, max_value=49),
    )
    def test_reconstruction_property(self, paragraphs, max_chars, overlap):
        bundle = text_bundle("\n\n".join(paragraphs))
        chunks = chunk_document(bundle, ChunkConfig(max_chars, overlap))
        assert reconstruct(chunks) == bundle.full_text
        for chunk in chunks:
            assert len(chunk.text) <= max_chars


class TestContextualize:
    def test_cache_hit_skips_provider(self, bundle, tmp_path):
        cache = ContextCache(tmp_path / "c.jsonl")
        chat = FallbackChatProvider()
        chunk = chunk_document(bundle)[0]
        first = contextualize(chunk, bundle, chat, cache)
        calls_after_first = chat.calls
        second = contextualize(chunk, bundle, chat, cache)
        assert chat.calls == calls_after_first
        assert first == second

    def test_fallback_blurb_mentions_title_and_ordinal(self, bundle, tmp_path):
        cache = ContextCache(tmp_path / "c.jsonl")
        chunk = chunk_document(bundle)[0]
        ctx = contextualize(chunk, bundle, FallbackChatProvider(), cache)
        assert bundle.title in ctx.context_blurb
        assert str(chunk.ordinal) in ctx.context_blurb

    def test_prompt_version_changes_key(self, bundle, tmp_path):
        cache = ContextCache(tmp_path / "c.jsonl")
        chat = FallbackChatProvider()
        chunk = chunk_document(bundle)[0]
        contextualize(chunk, bundle, chat, cache, prompt_version="v1")
        calls = chat.calls
        contextualize(chunk, bundle, chat, cache, prompt_version="v2")
        assert chat.calls == calls + 1
        assert context_cache_key("d", "c", "v1") != context_cache_key("d", "c", "v2")

    def test_cache_persists_across_instances(self, bundle, tmp_path):
        path = tmp_path / "c.jsonl"
        chat = FallbackChatProvider()
        chunk = chunk_document(bundle)[0]
        contextualize(chunk, bundle, chat, ContextCache(path))
        reloaded = ContextCache(path)
        contextualize(chunk, bundle, chat, reloaded)
        assert chat.calls == 1

    def test_wrong_bundle_rejected(self, bundle, tmp_path):
        other = DocumentBundle(doc_id="other", title="o", source_uri="", pages=("p",))
        chunk = chunk_document(bundle)[0]
        with pytest.raises(ValueError):
            contextualize(chunk, other, FallbackChatProvider(), ContextCache())


class TestDescribeImage:
    def test_fallback_returns_caption_verbatim(self, bundle):
        asset = bundle.images[0]
        desc = describe_image(asset, bundle, FallbackChatProvider())
        assert desc.description == asset.caption_from_source
        assert desc.kind == "other"

    def test_scripted_circuit_description(self, bundle):
        payload = json.dumps(
            {
                "kind": "circuit_diagram",
                "description": "Core bias loop with startup branch",
                "elements": ["M1", "M2", "R1"],
            }
        )
        desc = describe_image(bundle.images[0], bundle, ScriptedChatProvider([payload]))
        assert desc.kind == "circuit_diagram"
        assert desc.elements == ("M1", "M2", "R1")

    def test_missing_file(self, bundle, tmp_path):
        from dataclasses import replace

        asset = replace(bundle.images[0], path=tmp_path / "missing.pgm")
        with pytest.raises(UnreadableImage):
            describe_image(asset, bundle, FallbackChatProvider())
