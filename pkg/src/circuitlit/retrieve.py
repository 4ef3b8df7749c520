"""Hybrid retrieval: parallel keyword + semantic search, weighted
reciprocal-rank fusion, provider reranking, and context assembly.

Rank fusion is used instead of raw-score mixing because BM25 and cosine
scores live on incommensurable scales; only the ranks are combined:

    fused(r) = w_semantic / (rrf_k + rank_sem(r)) + w_keyword / (rrf_k + rank_kw(r))

with a term omitted when the record is absent from that list.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from .embedding import EmbeddingProvider, Vector, embed_batch
from .errors import ProviderError
from .index import Bm25Params, Index, SearchHit
from .providers import RerankProvider

logger = logging.getLogger(__name__)

CHARS_PER_TOKEN = 4


def estimate_tokens(text: str) -> int:
    """4-chars-per-token heuristic, used consistently across the package."""
    return math.ceil(len(text) / CHARS_PER_TOKEN)


@dataclass(frozen=True)
class FusionConfig:
    w_semantic: float = 0.8
    w_keyword: float = 0.2
    rrf_k: float = 60.0
    prefuse_k: int = 150
    final_k: int = 20
    bm25: Bm25Params = Bm25Params()

    def __post_init__(self) -> None:
        if self.w_semantic < 0 or self.w_keyword < 0:
            raise ValueError("fusion weights must be >= 0")
        if self.w_semantic + self.w_keyword <= 0:
            raise ValueError("at least one fusion weight must be positive")
        if self.rrf_k <= 0:
            raise ValueError("rrf_k must be > 0")
        if self.final_k > self.prefuse_k:
            raise ValueError("final_k must not exceed prefuse_k")


@dataclass(frozen=True)
class ContextEntry:
    record_id: str
    doc_id: str
    modality: str
    body: str
    citation_tag: int
    image_path: str | None = None


@dataclass(frozen=True)
class ContextBlock:
    entries: tuple[ContextEntry, ...]
    token_estimate: int


def fuse(kw: list[SearchHit], sem: list[SearchHit], cfg: FusionConfig) -> list[SearchHit]:
    """Merge two ranked lists by weighted reciprocal-rank fusion."""
    scores: dict[str, float] = {}
    carrier: dict[str, SearchHit] = {}
    for weight, hits in ((cfg.w_keyword, kw), (cfg.w_semantic, sem)):
        for hit in hits:
            scores[hit.record_id] = scores.get(hit.record_id, 0.0) + weight / (
                cfg.rrf_k + hit.rank
            )
            carrier.setdefault(hit.record_id, hit)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[: cfg.prefuse_k]
    return [
        replace(carrier[rid], score=score, rank=rank, retriever="fused")
        for rank, (rid, score) in enumerate(ranked, 1)
    ]


def rerank(
    query: str,
    hits: list[SearchHit],
    provider: RerankProvider,
    final_k: int,
) -> list[SearchHit]:
    """Reorder ``hits`` by provider relevance; degrade to fused order on error.

    Reranked hits get synthetic scores 1/rank so the rank/score invariant
    holds regardless of the provider's ordering.
    """
    if not hits:
        return []
    try:
        order = provider.rerank(query, [h.snippet for h in hits])
        if sorted(order) != list(range(len(hits))):
            raise ProviderError(f"rerank order is not a permutation of 0..{len(hits) - 1}")
    except ProviderError as exc:
        logger.warning("rerank degraded to fused order: %s", exc)
        return hits[:final_k]
    chosen = [hits[i] for i in order[:final_k]]
    return [
        replace(hit, score=1.0 / rank, rank=rank, retriever="reranked")
        for rank, hit in enumerate(chosen, 1)
    ]


def hybrid_search(
    query: str,
    index: Index,
    embedder: EmbeddingProvider,
    cfg: FusionConfig = FusionConfig(),
    reranker: RerankProvider | None = None,
) -> list[SearchHit]:
    """Run both retrievers in parallel, fuse, then rerank.

    The merge is deterministic regardless of which retriever finishes first.
    """
    if len(index) == 0:
        return []
    query_vec: Vector | None = None
    if query.strip():
        query_vec = embed_batch([query], embedder)[0]

    with ThreadPoolExecutor(max_workers=2) as pool:
        kw_future = pool.submit(index.keyword_search, query, cfg.prefuse_k, cfg.bm25)
        sem_future = (
            pool.submit(index.semantic_search, query_vec, cfg.prefuse_k)
            if query_vec is not None
            else None
        )
        kw = kw_future.result()
        sem = sem_future.result() if sem_future is not None else []

    fused = fuse(kw, sem, cfg)
    if reranker is None:
        return fused[: cfg.final_k]
    return rerank(query, fused, reranker, cfg.final_k)


def assemble_context(
    hits: list[SearchHit], budget_tokens: int, index: Index | None = None
) -> ContextBlock:
    """Greedily take hits in rank order while the token budget holds.

    Stops at the first entry that would overflow, so the block is always a
    rank-order prefix and citation tags stay sequential. When ``index`` is
    given, entries carry the full record body; otherwise the hit snippet.
    """
    if budget_tokens <= 0:
        raise ValueError("budget_tokens must be > 0")
    entries: list[ContextEntry] = []
    used = 0
    for hit in hits:
        image_path = hit.metadata.get("image_path") if hit.modality == "image" else None
        body = hit.snippet
        if index is not None:
            rec = index.get(hit.record_id)
            if rec is not None:
                body = rec.body
        cost = estimate_tokens(f"{body} {image_path}" if image_path else body)
        if used + cost > budget_tokens:
            break
        entries.append(
            ContextEntry(
                record_id=hit.record_id,
                doc_id=str(hit.metadata.get("doc_id", "")) or hit.record_id.split("#")[0],
                modality=hit.modality,
                body=body,
                citation_tag=len(entries) + 1,
                image_path=image_path,
            )
        )
        used += cost
    return ContextBlock(entries=tuple(entries), token_estimate=used)


def render_context(block: ContextBlock) -> str:
    """Render a context block as the numbered list passed to the model."""
    lines = []
    for entry in block.entries:
        marker = f" (image: {entry.image_path})" if entry.image_path else ""
        lines.append(f"[{entry.citation_tag}] {entry.body}{marker}")
    return "\n".join(lines)
