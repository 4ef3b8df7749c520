"""HTTP facade: ingest, search, reasoning sessions with step streaming,
and netlist generation. This is the surface the web client consumes.

Session streams are server-sent events (``event: step|final|error`` with a
JSON ``data:`` line); the concatenated step events always equal the steps of
the final transcript. Completed transcripts are persisted under the sessions
directory for replay.
"""

from __future__ import annotations

import json
import logging
import queue
import tempfile
import threading
import urllib.parse
import uuid
from dataclasses import dataclass
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse, StreamingResponse

from .agent import SessionLimits, ToolRegistry, Transcript, run_session
from .config import ServiceConfig
from .corpus import ChunkConfig, ContextCache
from .embedding import EmbeddingProviderConfig, HashEmbeddingProvider, HttpEmbeddingProvider
from .errors import CircuitLitError, CorruptIndex
from .index import Bm25Params, Index
from .netlist import NetlistConfig, generate
from .providers import (
    FallbackChatProvider,
    HttpChatProvider,
    HttpFetchProvider,
    HttpRerankProvider,
    IdentityRerankProvider,
    LocalFixtureFetchProvider,
    ScriptedChatProvider,
)
from .retrieve import FusionConfig
from .tools import IngestPipeline, SearchEngine, make_registry, tool_load_data

logger = logging.getLogger(__name__)


@dataclass
class AppState:
    cfg: ServiceConfig
    index: Index | None
    engine: SearchEngine | None
    pipeline: IngestPipeline | None
    registry: ToolRegistry | None
    chat: object
    sessions_dir: Path
    ingest_lock: threading.Lock


def make_chat(cfg: ServiceConfig):
    if cfg.chat_mode == "remote":
        return HttpChatProvider(cfg.chat_endpoint, cfg.chat_api_key_env)
    if cfg.chat_mode == "scripted":
        return ScriptedChatProvider.from_jsonl(cfg.chat_script, repeat_last=True)
    return FallbackChatProvider()


def make_embedder(cfg: ServiceConfig):
    if cfg.embed_mode == "remote":
        return HttpEmbeddingProvider(
            EmbeddingProviderConfig(
                provider_name="remote",
                endpoint=cfg.embed_endpoint,
                api_key_env=cfg.embed_api_key_env,
                dim=cfg.embed_dim,
            )
        )
    return HashEmbeddingProvider()


def make_reranker(cfg: ServiceConfig):
    if cfg.rerank_mode == "remote":
        return HttpRerankProvider(cfg.rerank_endpoint, cfg.rerank_api_key_env)
    return IdentityRerankProvider()


def make_fetcher(cfg: ServiceConfig):
    if cfg.fetch_mode == "remote":
        return HttpFetchProvider()
    if cfg.fixture_dir:
        return LocalFixtureFetchProvider(cfg.fixture_dir)
    return None


def build_state(cfg: ServiceConfig) -> AppState:
    """Construct providers, load (or create) the index, wire the tools."""
    index: Index | None
    db = Path(cfg.db_path)
    if db.is_file():
        try:
            index = Index.load(db)
        except CorruptIndex as exc:
            logger.error("index %s unusable: %s", db, exc)
            index = None
    else:
        index = Index()

    chat = make_chat(cfg)
    embedder = make_embedder(cfg)
    fusion = FusionConfig(
        w_semantic=cfg.w_sem,
        w_keyword=cfg.w_kw,
        rrf_k=cfg.rrf_k,
        prefuse_k=cfg.prefuse_k,
        final_k=cfg.final_k,
        bm25=Bm25Params(),
    )
    engine = pipeline = registry = None
    if index is not None:
        engine = SearchEngine(index=index, embedder=embedder, fusion=fusion, reranker=make_reranker(cfg))
        pipeline = IngestPipeline(
            index=index,
            chat=chat,
            embedder=embedder,
            cache=ContextCache(cfg.cache_path or None),
            chunk_cfg=ChunkConfig(cfg.max_chunk_chars, cfg.overlap_chars),
        )
        registry = make_registry(
            engine,
            pipeline,
            fetcher=make_fetcher(cfg),
            fetch_dir=cfg.fetch_dir,
            search_k=cfg.search_k,
        )
    sessions_dir = Path(cfg.sessions_dir)
    sessions_dir.mkdir(parents=True, exist_ok=True)
    return AppState(
        cfg=cfg,
        index=index,
        engine=engine,
        pipeline=pipeline,
        registry=registry,
        chat=chat,
        sessions_dir=sessions_dir,
        ingest_lock=threading.Lock(),
    )


def _sse(event: str, payload: dict) -> str:
    return f"event: {event}\ndata: {json.dumps(payload)}\n\n"


def image_url(record_id: str) -> str:
    return "/api/image/" + urllib.parse.quote(record_id, safe="")


def hit_to_json(hit) -> dict:
    out = {
        "record_id": hit.record_id,
        "modality": hit.modality,
        "score": hit.score,
        "rank": hit.rank,
        "retriever": hit.retriever,
        "snippet": hit.snippet,
        "metadata": hit.metadata,
    }
    if hit.modality == "image":
        out["image_url"] = image_url(hit.record_id)
    return out


def create_app(cfg: ServiceConfig | None = None, state: AppState | None = None) -> FastAPI:
    if state is None:
        state = build_state(cfg or ServiceConfig())
    app = FastAPI(title="circuitlit", version="0.1.0")
    origins = [o.strip() for o in state.cfg.cors_allowed_origins.split(",") if o.strip()]
    app.add_middleware(
        CORSMiddleware,
        allow_origins=origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.circuitlit = state

    def _require_index() -> Index:
        if state.index is None:
            raise HTTPException(status_code=503, detail="index unavailable")
        return state.index

    @app.get("/api/health")
    def health() -> dict:
        from .netlist import LABELING_BACKEND

        return {
            "status": "ok",
            "records": len(state.index) if state.index is not None else None,
            "labeling_backend": LABELING_BACKEND,
        }

    @app.get("/api/search")
    def search(request: Request) -> JSONResponse:
        _require_index()
        q = request.query_params.get("q")
        if not q or not q.strip():
            raise HTTPException(status_code=400, detail="q is required")
        raw_k = request.query_params.get("k", str(state.cfg.search_k))
        try:
            k = int(raw_k)
        except ValueError:
            raise HTTPException(status_code=400, detail="k must be an integer")
        if k < 1:
            raise HTTPException(status_code=400, detail="k must be >= 1")
        hits = state.engine.search(q, k=k)
        return JSONResponse({"hits": [hit_to_json(h) for h in hits]})

    @app.get("/api/image/{record_id}")
    def image(record_id: str):
        index = _require_index()
        rec = index.get(record_id)
        if rec is None or rec.modality != "image":
            raise HTTPException(status_code=404, detail="unknown image record")
        path = Path(rec.metadata.get("image_path", ""))
        if not path.is_file():
            raise HTTPException(status_code=404, detail="image file missing")
        media = "image/x-portable-graymap" if path.suffix == ".pgm" else None
        return FileResponse(path, media_type=media)

    @app.post("/api/query")
    def query(payload: dict = Body(...)) -> StreamingResponse:
        _require_index()
        question = str(payload.get("question", "")).strip()
        if not question:
            raise HTTPException(status_code=400, detail="question is empty")
        opts = payload.get("session_opts") or {}
        limits = SessionLimits(
            max_steps=int(opts.get("max_steps", state.cfg.max_steps)),
            max_tool_output_chars=int(
                opts.get("max_tool_output_chars", state.cfg.max_tool_output_chars)
            ),
        )
        session_id = str(opts.get("session_id") or uuid.uuid4().hex)
        events: queue.Queue = queue.Queue()

        def on_event(kind: str, item) -> None:
            if kind == "step":
                events.put(("step", item.to_json()))

        def worker() -> None:
            try:
                transcript = run_session(
                    question,
                    state.registry,
                    state.chat,
                    limits,
                    session_id=session_id,
                    on_event=on_event,
                )
                save_transcript(state.sessions_dir, transcript)
                events.put(("final", transcript.to_json()))
            except Exception as exc:
                events.put(("error", {"error": f"{type(exc).__name__}: {exc}"}))
            finally:
                events.put(None)

        threading.Thread(target=worker, daemon=True).start()

        def stream():
            while True:
                item = events.get()
                if item is None:
                    break
                kind, payload = item
                yield _sse(kind, payload)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/api/session/{session_id}")
    def session(session_id: str) -> JSONResponse:
        path = state.sessions_dir / f"{session_id}.json"
        if not path.is_file():
            raise HTTPException(status_code=404, detail="unknown session")
        return JSONResponse(json.loads(path.read_text(encoding="utf-8")))

    @app.post("/api/ingest")
    def ingest(payload: dict = Body(...)) -> JSONResponse:
        _require_index()
        manifest_path = payload.get("manifest_path")
        if not manifest_path:
            raise HTTPException(status_code=400, detail="manifest_path is required")
        if not state.ingest_lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="ingest writer busy")
        try:
            result = tool_load_data(manifest_path, state.pipeline)
        finally:
            state.ingest_lock.release()
        if result.text.startswith("load failed"):
            raise HTTPException(status_code=400, detail=result.text)
        return JSONResponse({"summary": result.text})

    @app.post("/api/netlist")
    async def netlist(image: UploadFile, detections: UploadFile) -> PlainTextResponse:
        with tempfile.TemporaryDirectory() as tmp:
            image_path = Path(tmp) / "schematic.pgm"
            det_path = Path(tmp) / "detections.json"
            image_path.write_bytes(await image.read())
            det_path.write_bytes(await detections.read())
            try:
                result = generate(image_path, det_path, NetlistConfig())
            except (CircuitLitError, ValueError) as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        return PlainTextResponse(result.text)

    return app


def save_transcript(sessions_dir: Path, transcript: Transcript) -> Path:
    path = sessions_dir / f"{transcript.session_id}.json"
    path.write_text(json.dumps(transcript.to_json(), indent=2), encoding="utf-8")
    return path
