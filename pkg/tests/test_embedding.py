"""Fallback embedder and vector math."""

from __future__ import annotations

import hashlib
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circuitlit.embedding import (
    FALLBACK_DIM,
    FALLBACK_SEED,
    HashEmbeddingProvider,
    Vector,
    cosine,
    embed_batch,
)
from circuitlit.errors import DimMismatch, EmptyBatch


def reference_projection(text: str, dim: int = FALLBACK_DIM) -> list[float]:
    """Independent recomputation of the trigram hash projection."""
    t = text.lower()
    grams = [t[i : i + 3] for i in range(len(t) - 2)] if len(t) >= 3 else [t]
    acc = [0.0] * dim
    for gram in grams:
        digest = hashlib.blake2b(gram.encode("utf-8"), key=FALLBACK_SEED, digest_size=8).digest()
        h = int.from_bytes(digest, "big")
        acc[(h >> 1) % dim] += 1.0 if h & 1 else -1.0
    norm = math.sqrt(sum(v * v for v in acc))
    return [v / norm for v in acc]


def test_identical_texts_identical_vectors(embedder):
    a, b = embed_batch(["a", "a"], embedder)
    assert a == b


def test_fallback_matches_reference_projection(embedder):
    for text in ("abc", "bandgap reference circuit", "52.5-nW", "x"):
        (vec,) = embed_batch([text], embedder)
        expected = reference_projection(text)
        assert vec.dim == FALLBACK_DIM
        np.testing.assert_allclose(vec.as_array(), expected, atol=1e-12)
        assert abs(np.linalg.norm(vec.as_array()) - 1.0) < 1e-9


def test_empty_batch(embedder):
    with pytest.raises(EmptyBatch):
        embed_batch([], embedder)
    with pytest.raises(EmptyBatch):
        embed_batch(["ok", ""], embedder)


def test_batch_concatenation_equivalence(embedder):
    xs = ["alpha beta", "gamma"]
    ys = ["delta epsilon zeta"]
    assert embed_batch(xs + ys, embedder) == embed_batch(xs, embedder) + embed_batch(ys, embedder)


class TestCosine:
    def test_identity(self):
        v = Vector.from_raw([0.3, 0.4, 0.5])
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        a = Vector((1.0, 0.0))
        b = Vector((0.0, 1.0))
        assert cosine(a, b) == 0.0

    def test_hand_value(self):
        a = Vector((0.6, 0.8))
        b = Vector((1.0, 0.0))
        assert cosine(a, b) == pytest.approx(0.6, abs=1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            cosine(Vector((1.0,)), Vector((1.0, 0.0)))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
    def test_symmetric_and_bounded(self, xs, ys):
        try:
            a, b = Vector.from_raw(xs), Vector.from_raw(ys)
        except ValueError:
            return  # zero vectors are rejected upstream
        assert cosine(a, b) == pytest.approx(cosine(b, a), abs=1e-12)
        assert -1.0 <= cosine(a, b) <= 1.0
