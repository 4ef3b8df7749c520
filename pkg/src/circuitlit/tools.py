"""The agent's tool suite and the bundle ingest pipeline.

search_db answers queries against the unified index (and recognizes a
"list all paper titles" directive for corpus enumeration); paper_fetcher
pulls documents through a fetch provider into a content-addressed store;
load_data runs the full chunk/contextualize/describe/embed/upsert pipeline;
netlist_gen wraps the schematic extractor.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .agent import Citation, ToolRegistry, ToolResult, ToolSpec
from .corpus import (
    ChunkConfig,
    ContextCache,
    DocumentBundle,
    chunk_document,
    contextualize,
    describe_image,
    load_bundle,
)
from .embedding import EmbeddingProvider, embed_batch
from .errors import KeyedError
from .index import Index, IndexRecord, IngestStats
from .netlist import NetlistConfig, generate
from .providers import ChatProvider, FetchProvider, FetchRequest, FetchResult, RerankProvider, content_hash_name
from .retrieve import FusionConfig, hybrid_search

NO_RESULTS = "NO_RESULTS"

_TITLE_LISTING = re.compile(r"^\s*list\s+(all\s+)?(the\s+)?(paper\s+)?titles\s*\.?\s*$", re.IGNORECASE)


@dataclass
class SearchEngine:
    """Index plus the providers needed to query it."""

    index: Index
    embedder: EmbeddingProvider
    fusion: FusionConfig = field(default_factory=FusionConfig)
    reranker: RerankProvider | None = None

    def search(self, query: str, k: int | None = None):
        cfg = self.fusion
        if k is not None:
            k = max(1, min(k, cfg.prefuse_k))
            cfg = replace(cfg, final_k=k)
        return hybrid_search(query, self.index, self.embedder, cfg, self.reranker)


@dataclass
class IngestPipeline:
    """corpus -> embed -> index, with contextual caching."""

    index: Index
    chat: ChatProvider
    embedder: EmbeddingProvider
    cache: ContextCache
    chunk_cfg: ChunkConfig = field(default_factory=ChunkConfig)

    def build_records(self, bundle: DocumentBundle) -> list[IndexRecord]:
        chunks = chunk_document(bundle, self.chunk_cfg)
        bodies: list[str] = []
        meta: list[tuple[str, str, dict]] = []  # (record_id, modality, metadata)
        prev_text = ""
        for chunk in chunks:
            ctx = contextualize(chunk, bundle, self.chat, self.cache, neighbor=prev_text)
            prev_text = chunk.text
            bodies.append(f"{ctx.context_blurb}\n\n{chunk.text}")
            meta.append(
                (
                    chunk.chunk_id,
                    "text",
                    {
                        "title": bundle.title,
                        "char_span": list(chunk.char_span),
                        "ordinal": chunk.ordinal,
                    },
                )
            )
        for asset in bundle.images:
            desc = describe_image(asset, bundle, self.chat)
            body = desc.description
            if desc.elements:
                body += " Elements: " + ", ".join(desc.elements)
            bodies.append(body)
            meta.append(
                (
                    f"{bundle.doc_id}#i:{asset.image_id}",
                    "image",
                    {
                        "title": bundle.title,
                        "page_no": asset.page_no,
                        "image_path": str(asset.path),
                        "kind": desc.kind,
                    },
                )
            )
        vectors = embed_batch(bodies, self.embedder)
        return [
            IndexRecord(
                record_id=record_id,
                doc_id=bundle.doc_id,
                modality=modality,
                body=body,
                vector=vector,
                metadata=metadata,
            )
            for (record_id, modality, metadata), body, vector in zip(meta, bodies, vectors)
        ]

    def ingest_bundle(self, bundle: DocumentBundle) -> tuple[IngestStats, int, int]:
        """Returns (stats, text record count, image record count).

        Records are built fully before a single atomic upsert, so a failure
        mid-pipeline leaves the index untouched.
        """
        records = self.build_records(bundle)
        stats = self.index.upsert(records)
        n_text = sum(1 for r in records if r.modality == "text")
        return stats, n_text, len(records) - n_text


def tool_search_db(query: str, k: int, engine: SearchEngine) -> ToolResult:
    """Format hybrid search results as a numbered observation."""
    query = query.strip()
    if _TITLE_LISTING.match(query):
        titles = engine.index.titles()
        if not titles:
            return ToolResult(NO_RESULTS)
        lines = [f"[{i}] {title} (doc: {doc_id})" for i, (doc_id, title) in enumerate(titles, 1)]
        return ToolResult("\n".join(lines))
    hits = engine.search(query, k=k)
    if not hits:
        return ToolResult(NO_RESULTS)
    lines = []
    citations = []
    for i, hit in enumerate(hits, 1):
        title = hit.metadata.get("title", hit.record_id)
        if hit.modality == "image":
            path = hit.metadata.get("image_path", "")
            lines.append(f"[{i}] {title} (image) path={path}: {hit.snippet}")
        else:
            lines.append(f"[{i}] {title} (text): {hit.snippet}")
        citations.append(
            Citation(
                doc_id=str(hit.metadata.get("doc_id", "")),
                record_id=hit.record_id,
                modality=hit.modality,
                image_path=hit.metadata.get("image_path"),
            )
        )
    return ToolResult("\n".join(lines), citations=citations)


def tool_paper_fetcher(req: FetchRequest, fetcher: FetchProvider) -> FetchResult:
    """Fetch a document into a content-addressed file under dest_dir."""
    payload, source_uri, suffix = fetcher.fetch(req)
    req.dest_dir.mkdir(parents=True, exist_ok=True)
    path = req.dest_dir / content_hash_name(payload, suffix)
    path.write_bytes(payload)
    return FetchResult(
        doc_path=path,
        source_uri=source_uri,
        bytes=len(payload),
        needs_extraction=suffix != ".json",
    )


def _plural(n: int, noun: str) -> str:
    return f"{n} {noun}" + ("" if n == 1 else "s")


def tool_load_data(bundle_path: str | Path, pipeline: IngestPipeline) -> ToolResult:
    """Ingest a bundle manifest; failures become a load-failed observation."""
    try:
        bundle = load_bundle(bundle_path)
        stats, n_text, n_image = pipeline.ingest_bundle(bundle)
    except KeyedError as exc:
        return ToolResult(f"load failed: {exc.tag()}")
    except Exception as exc:
        return ToolResult(f"load failed: {type(exc).__name__}: {exc}")
    summary = (
        f"added {_plural(n_text, 'text record')}, {_plural(n_image, 'image record')} "
        f"for {bundle.doc_id} (new: {stats.added}, replaced: {stats.replaced}, "
        f"index total: {stats.total})"
    )
    return ToolResult(summary)


def parse_fetch_ref(ref: str, dest_dir: Path) -> FetchRequest:
    ref = ref.strip()
    for prefix, kind in (("url:", "url"), ("arxiv_id:", "arxiv_id"), ("title:", "title_query")):
        if ref.startswith(prefix):
            return FetchRequest(kind=kind, value=ref[len(prefix) :].strip(), dest_dir=dest_dir)
    if ref.startswith(("http://", "https://")):
        return FetchRequest(kind="url", value=ref, dest_dir=dest_dir)
    return FetchRequest(kind="arxiv_id", value=ref, dest_dir=dest_dir)


def make_registry(
    engine: SearchEngine,
    pipeline: IngestPipeline,
    fetcher: FetchProvider | None = None,
    fetch_dir: str | Path = "fetched",
    netlist_cfg: NetlistConfig = NetlistConfig(),
    search_k: int = 5,
) -> ToolRegistry:
    """Wire the standard tool suite into a registry."""
    registry = ToolRegistry()
    fetch_dir = Path(fetch_dir)

    registry.register(
        ToolSpec(
            name="search_db",
            description=(
                "Search the local literature database (keyword + semantic, reranked). "
                "Input a query; 'list all paper titles' enumerates the corpus."
            ),
            input_schema="query text",
        ),
        lambda q: tool_search_db(q, search_k, engine),
    )

    def _fetch(ref: str) -> str:
        if fetcher is None:
            return "tool error: no fetch provider configured"
        result = tool_paper_fetcher(parse_fetch_ref(ref, fetch_dir), fetcher)
        if result.needs_extraction:
            hint = (
                f"needs extraction: convert to a bundle manifest, then load_data "
                f"{result.doc_path.with_suffix('.manifest.json')}"
            )
        else:
            hint = f"ready: load_data {result.doc_path}"
        return f"fetched {result.source_uri} -> {result.doc_path} ({result.bytes} bytes); {hint}"

    registry.register(
        ToolSpec(
            name="paper_fetcher",
            description="Fetch a paper by direct URL or document id into the local store.",
            input_schema="url:<URL> | arxiv_id:<id> | bare id or URL",
        ),
        _fetch,
    )

    registry.register(
        ToolSpec(
            name="load_data",
            description="Ingest a bundle manifest into the database (chunks, captions, embeddings).",
            input_schema="path to a bundle manifest JSON",
        ),
        lambda path: tool_load_data(path.strip(), pipeline),
    )

    def _netlist(arg: str) -> str:
        arg = arg.strip()
        if arg.startswith("{"):
            spec = json.loads(arg)
            image, detections = spec["image"], spec["detections"]
        else:
            parts = arg.split()
            if len(parts) != 2:
                return "tool error: expected '<image.pgm> <detections.json>'"
            image, detections = parts
        return generate(image, detections, netlist_cfg).text

    registry.register(
        ToolSpec(
            name="netlist_gen",
            description="Convert a schematic image plus detections JSON into a SPICE netlist.",
            input_schema='"<image.pgm> <detections.json>" or {"image":..., "detections":...}',
        ),
        _netlist,
    )
    return registry
