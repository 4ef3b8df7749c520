"""Shared fixtures: bundle manifests, offline providers, populated indexes."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from circuitlit.corpus import ChunkConfig, ContextCache, load_bundle
from circuitlit.embedding import HashEmbeddingProvider
from circuitlit.index import Index
from circuitlit.netlist.raster import write_pgm
from circuitlit.providers import FallbackChatProvider, IdentityRerankProvider
from circuitlit.retrieve import FusionConfig
from circuitlit.tools import IngestPipeline, SearchEngine

import numpy as np


def make_manifest(
    tmp_path: Path,
    doc_id: str = "doc1",
    title: str = "Nanowatt Voltage Reference Survey",
    pages: list[str] | None = None,
    images: int = 0,
    name: str | None = None,
) -> Path:
    pages = pages or [
        "A survey of low-power voltage reference circuits.\n\nCovers design tradeoffs.",
        "Details measurement methodology across process corners.",
    ]
    image_entries = []
    for i in range(images):
        img_path = tmp_path / f"{doc_id}_fig{i + 1}.pgm"
        write_pgm(img_path, np.full((8, 8), 200, dtype=np.uint8))
        image_entries.append(
            {
                "image_id": f"fig{i + 1}",
                "path": img_path.name,
                "page_no": 1,
                "caption": f"Fig. {i + 1} core schematic",
            }
        )
    manifest = {
        "doc_id": doc_id,
        "title": title,
        "source_uri": f"file://{doc_id}",
        "pages": pages,
        "images": image_entries,
    }
    path = tmp_path / (name or f"{doc_id}.json")
    path.write_text(json.dumps(manifest), encoding="utf-8")
    return path


@pytest.fixture
def manifest_path(tmp_path: Path) -> Path:
    return make_manifest(tmp_path, images=1)


@pytest.fixture
def bundle(manifest_path: Path):
    return load_bundle(manifest_path)


@pytest.fixture
def embedder() -> HashEmbeddingProvider:
    return HashEmbeddingProvider()


@pytest.fixture
def chat() -> FallbackChatProvider:
    return FallbackChatProvider()


@pytest.fixture
def pipeline(tmp_path: Path, chat, embedder) -> IngestPipeline:
    return IngestPipeline(
        index=Index(),
        chat=chat,
        embedder=embedder,
        cache=ContextCache(tmp_path / "cache.jsonl"),
        chunk_cfg=ChunkConfig(),
    )


@pytest.fixture
def engine(pipeline) -> SearchEngine:
    return SearchEngine(
        index=pipeline.index,
        embedder=pipeline.embedder,
        fusion=FusionConfig(),
        reranker=IdentityRerankProvider(),
    )


def corpus_docs() -> list[tuple[str, str, list[str]]]:
    """Six small papers on reference/oscillator circuits for search fixtures."""
    return [
        (
            "bgr-52nw",
            "A 52.5-nW Subbandgap Reference for Nanowatt Systems",
            [
                "We present a subbandgap voltage reference consuming 52.5-nW at a "
                "0.55-V output. The divider splits the base emitter voltage without "
                "resistors, enabling sub-1V supply operation.\n\nA nano-ampere "
                "current reference biases the bipolar core."
            ],
        ),
        (
            "bgr-100nw",
            "A 100-nW Bandgap Reference with Curvature Correction",
            [
                "This bandgap reference achieves 100-nW power with a 1.09-V output "
                "from a 1.2-V supply.\n\nCurvature correction keeps drift low over "
                "temperature."
            ],
        ),
        (
            "ring-osc",
            "Ring Oscillator Design for Subthreshold Clocks",
            [
                "Ring oscillators built from current-starved inverters provide "
                "kilohertz clocks for sensor nodes.\n\nJitter depends on supply "
                "regulation quality."
            ],
        ),
        (
            "lc-vco",
            "Quadrature LC Oscillators Using Varactor Coupling",
            [
                "Two cross-coupled LC oscillators coupled via varactors produce "
                "quadrature outputs between 3.86 and 4.22 GHz.\n\nVaractors provide "
                "both tuning and ninety degree coupling."
            ],
        ),
        (
            "ldo-reg",
            "Capacitorless LDO Regulators for SoC Power Domains",
            [
                "A capacitorless low dropout regulator stabilizes local supplies.\n\n"
                "Fast transient response requires an adaptive bias stage."
            ],
        ),
        (
            "ptat-gen",
            "PTAT Voltage Generators in Weak Inversion",
            [
                "Proportional to absolute temperature generators built from stacked "
                "transistors in weak inversion.\n\nThey feed curvature trimming in "
                "reference circuits."
            ],
        ),
    ]


@pytest.fixture
def six_paper_engine(tmp_path: Path, pipeline, engine) -> SearchEngine:
    for doc_id, title, pages in corpus_docs():
        path = make_manifest(tmp_path, doc_id=doc_id, title=title, pages=pages)
        bundle = load_bundle(path)
        pipeline.ingest_bundle(bundle)
    return engine
