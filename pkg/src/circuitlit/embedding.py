"""Text embedding with a deterministic offline fallback.

Vectors are always stored L2-normalized so cosine similarity reduces to a dot
product. The fallback embedder hashes character trigrams into a fixed 256-dim
space: it is a pure function of the text (fixed seed, no state), which keeps
every retrieval test runnable without network access while still producing a
useful nearest-neighbor structure.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import DimMismatch, EmptyBatch, ProviderError

FALLBACK_DIM = 256
FALLBACK_SEED = b"trigram-embed-v1"


@dataclass(frozen=True)
class Vector:
    """Fixed-length, L2-normalized embedding vector."""

    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    @staticmethod
    def from_raw(raw: Sequence[float]) -> "Vector":
        arr = np.asarray(raw, dtype=np.float64)
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise ValueError("cannot normalize a zero vector")
        return Vector(tuple((arr / norm).tolist()))


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    provider_name: str
    endpoint: str = ""
    api_key_env: str = ""
    dim: int = FALLBACK_DIM
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


def _ngrams(text: str, n: int = 3) -> list[str]:
    t = text.lower()
    if len(t) < n:
        return [t]
    return [t[i : i + n] for i in range(len(t) - n + 1)]


class HashEmbeddingProvider:
    """Offline fallback: seeded hash projection of character trigrams."""

    def __init__(self, dim: int = FALLBACK_DIM, seed: bytes = FALLBACK_SEED):
        self.dim = dim
        self._seed = seed

    def _project(self, gram: str) -> tuple[int, float]:
        digest = hashlib.blake2b(gram.encode("utf-8"), key=self._seed, digest_size=8).digest()
        h = int.from_bytes(digest, "big")
        sign = 1.0 if h & 1 else -1.0
        return (h >> 1) % self.dim, sign

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            acc = [0.0] * self.dim
            for gram in _ngrams(text):
                idx, sign = self._project(gram)
                acc[idx] += sign
            if not any(acc):
                # Pathological all-cancelling input: fall back to a single
                # deterministic component so normalization stays defined.
                idx, sign = self._project(text.lower())
                acc[idx] = sign
            out.append(acc)
        return out


class HttpEmbeddingProvider:
    """Remote embedder speaking ``{"texts": [...]} -> {"vectors": [[...], ...]}``."""

    def __init__(self, cfg: EmbeddingProviderConfig, timeout: float = 30.0):
        self.cfg = cfg
        self.dim = cfg.dim
        self._timeout = timeout

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        import httpx

        headers = {}
        if self.cfg.api_key_env:
            key = os.environ.get(self.cfg.api_key_env, "")
            if not key:
                raise ProviderError(f"api key env {self.cfg.api_key_env} not set")
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = httpx.post(
                self.cfg.endpoint,
                json={"texts": list(texts)},
                headers=headers,
                timeout=self._timeout,
            )
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise ProviderError(f"embedding request failed: {exc}", retryable=True) from exc
        vectors = resp.json().get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderError("embedding response malformed")
        return vectors


def embed_batch(texts: Sequence[str], provider: EmbeddingProvider) -> list[Vector]:
    """Embed ``texts``, enforcing dim consistency and L2 normalization."""
    if not texts:
        raise EmptyBatch("embed_batch requires at least one text")
    for i, t in enumerate(texts):
        if not t:
            raise EmptyBatch(f"texts[{i}] is empty")
    raws = provider.embed(texts)
    vectors = []
    for raw in raws:
        if len(raw) != provider.dim:
            raise DimMismatch(f"provider returned dim {len(raw)}, expected {provider.dim}")
        vectors.append(Vector.from_raw(raw))
    return vectors


def cosine(a: Vector, b: Vector) -> float:
    """Cosine similarity; for normalized vectors this is the dot product."""
    if a.dim != b.dim:
        raise DimMismatch(f"dim {a.dim} vs {b.dim}")
    val = float(np.dot(a.as_array(), b.as_array()))
    return max(-1.0, min(1.0, val))
