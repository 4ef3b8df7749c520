"""Document bundles and the chunk/contextualize/describe pipeline.

A bundle is a pre-extracted paper: page texts plus image files listed in a
JSON manifest. Chunking is paragraph-first with character-window fallback for
oversized paragraphs, and it is loss-free: stripping each chunk's overlap
prefix and concatenating reproduces the document text byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .errors import (
    DuplicateImageId,
    EmptyDocument,
    MissingField,
    ProviderError,
    UnreadableImage,
)
from .providers import ChatProvider

PROMPT_VERSION = "ctx-v1"

IMAGE_KINDS = ("circuit_diagram", "plot", "table", "other")


@dataclass(frozen=True)
class ImageAsset:
    image_id: str
    path: Path
    page_no: int
    caption_from_source: str | None = None


@dataclass(frozen=True)
class DocumentBundle:
    doc_id: str
    title: str
    source_uri: str
    pages: tuple[str, ...]
    images: tuple[ImageAsset, ...] = ()
    fetched_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    @property
    def full_text(self) -> str:
        """Canonical document text: pages joined by a blank line."""
        return "\n\n".join(self.pages)


@dataclass(frozen=True)
class Chunk:
    """A slice of the document text.

    ``char_span`` covers the full chunk text including the overlap prefix;
    the non-duplicated core is ``char_span[0] + overlap_prefix_len ..
    char_span[1]``.
    """

    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    char_span: tuple[int, int]
    overlap_prefix_len: int


@dataclass(frozen=True)
class ContextualizedChunk:
    chunk: Chunk
    context_blurb: str
    cache_key: str


@dataclass(frozen=True)
class ImageDescription:
    image_id: str
    doc_id: str
    kind: str
    description: str
    elements: tuple[str, ...] = ()


@dataclass(frozen=True)
class ChunkConfig:
    max_chunk_chars: int = 4000
    overlap_chars: int = 400

    def __post_init__(self) -> None:
        if self.overlap_chars < 0:
            raise ValueError("overlap_chars must be >= 0")
        if self.max_chunk_chars <= self.overlap_chars:
            raise ValueError("max_chunk_chars must exceed overlap_chars")


def load_bundle(manifest_path: str | Path) -> DocumentBundle:
    """Load and validate a bundle manifest (see README for the schema)."""
    manifest_path = Path(manifest_path)
    data = json.loads(manifest_path.read_text(encoding="utf-8"))

    for key in ("doc_id", "title", "pages"):
        if key not in data or data[key] in ("", None, []):
            raise MissingField(key)
    pages = data["pages"]
    if not isinstance(pages, list) or not all(isinstance(p, str) for p in pages):
        raise MissingField("pages", "must be a list of strings")

    images = []
    seen_ids: set[str] = set()
    for i, img in enumerate(data.get("images", [])):
        for key in ("image_id", "path", "page_no"):
            if key not in img:
                raise MissingField(f"images[{i}].{key}")
        if img["image_id"] in seen_ids:
            raise DuplicateImageId(img["image_id"])
        seen_ids.add(img["image_id"])
        path = Path(img["path"])
        if not path.is_absolute():
            path = manifest_path.parent / path
        if not path.is_file():
            raise UnreadableImage(str(path))
        page_no = int(img["page_no"])
        if not 1 <= page_no <= len(pages):
            raise MissingField(f"images[{i}].page_no", f"out of range 1..{len(pages)}")
        images.append(
            ImageAsset(
                image_id=img["image_id"],
                path=path,
                page_no=page_no,
                caption_from_source=img.get("caption"),
            )
        )

    return DocumentBundle(
        doc_id=data["doc_id"],
        title=data["title"],
        source_uri=data.get("source_uri", ""),
        pages=tuple(pages),
        images=tuple(images),
        fetched_at=data.get("fetched_at", datetime.now(timezone.utc).isoformat()),
    )


_PARAGRAPH_BREAK = re.compile(r"\n[ \t\r]*\n(?:[ \t\r]*\n)*")


def _paragraph_boundaries(text: str) -> list[int]:
    """End offsets of paragraph segments; each includes its trailing break."""
    ends = [m.end() for m in _PARAGRAPH_BREAK.finditer(text)]
    if not ends or ends[-1] != len(text):
        ends.append(len(text))
    return ends


def chunk_document(bundle: DocumentBundle, cfg: ChunkConfig = ChunkConfig()) -> list[Chunk]:
    """Split the document into overlapping chunks at paragraph boundaries.

    Each chunk's core starts where the previous core ended, so stripping
    overlap prefixes reconstructs the source exactly. A paragraph larger than
    the budget is cut into character windows instead.
    """
    text = bundle.full_text
    if not text.strip():
        raise EmptyDocument(bundle.doc_id)

    boundaries = _paragraph_boundaries(text)
    chunks: list[Chunk] = []
    pos = 0
    prev_text_start = 0
    bi = 0
    while pos < len(text):
        overlap = 0 if pos == 0 else min(cfg.overlap_chars, pos - prev_text_start)
        budget = cfg.max_chunk_chars - overlap
        while bi < len(boundaries) and boundaries[bi] <= pos:
            bi += 1
        # Furthest paragraph end that still fits; else a mid-paragraph cut.
        end = None
        j = bi
        while j < len(boundaries) and boundaries[j] - pos <= budget:
            end = boundaries[j]
            j += 1
        if end is None:
            end = pos + budget
        start = pos - overlap
        ordinal = len(chunks)
        chunks.append(
            Chunk(
                chunk_id=f"{bundle.doc_id}#c{ordinal}",
                doc_id=bundle.doc_id,
                ordinal=ordinal,
                text=text[start:end],
                char_span=(start, end),
                overlap_prefix_len=overlap,
            )
        )
        prev_text_start = start
        pos = end
    return chunks


class ContextCache:
    """Append-only JSON-lines key/value store for context blurbs.

    Values are deterministic for a given key, so concurrent writers only need
    write serialization (last record for a key wins on reload).
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._mem: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.is_file():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                self._mem[rec["key"]] = rec["value"]

    def get(self, key: str) -> str | None:
        return self._mem.get(key)

    def put(self, key: str, value: str, prompt_version: str = PROMPT_VERSION) -> None:
        with self._lock:
            self._mem[key] = value
            if self.path is not None:
                rec = {
                    "key": key,
                    "value": value,
                    "prompt_version": prompt_version,
                    "created_at": datetime.now(timezone.utc).isoformat(),
                }
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec) + "\n")

    def __len__(self) -> int:
        return len(self._mem)


def context_cache_key(doc_id: str, chunk_id: str, prompt_version: str) -> str:
    payload = "\x00".join((doc_id, chunk_id, prompt_version)).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def build_context_prompt(
    chunk: Chunk, bundle: DocumentBundle, neighbor: str = ""
) -> str:
    return (
        "Situate this excerpt within its source document in one or two "
        "sentences, for retrieval.\n"
        f"Title: {bundle.title}\n"
        f"Chunk: {chunk.ordinal}\n"
        f"Neighbor: {neighbor[-200:] if neighbor else '(document start)'}\n"
        "Excerpt:\n"
        f"{chunk.text}"
    )


def contextualize(
    chunk: Chunk,
    bundle: DocumentBundle,
    llm: ChatProvider,
    cache: ContextCache,
    neighbor: str = "",
    prompt_version: str = PROMPT_VERSION,
) -> ContextualizedChunk:
    """Attach a situating blurb to ``chunk``, consulting the cache first."""
    if chunk.doc_id != bundle.doc_id:
        raise ValueError(f"chunk {chunk.chunk_id} does not belong to {bundle.doc_id}")
    key = context_cache_key(bundle.doc_id, chunk.chunk_id, prompt_version)
    cached = cache.get(key)
    if cached is not None:
        return ContextualizedChunk(chunk=chunk, context_blurb=cached, cache_key=key)
    prompt = build_context_prompt(chunk, bundle, neighbor)
    try:
        blurb = llm.complete([{"role": "user", "content": prompt}]).strip()
    except ProviderError as exc:
        raise ProviderError(f"{chunk.chunk_id}: {exc}", retryable=exc.retryable) from exc
    if not blurb:
        blurb = f'Part {chunk.ordinal} of "{bundle.title}".'
    cache.put(key, blurb, prompt_version)
    return ContextualizedChunk(chunk=chunk, context_blurb=blurb, cache_key=key)


def build_caption_prompt(asset: ImageAsset) -> str:
    return (
        "Describe the image for a search index. Classify its kind as one of: "
        "circuit_diagram, plot, table, other. List labeled elements.\n"
        f"Image file: {asset.path.name}\n"
        f"Page: {asset.page_no}\n"
        f"Caption: {asset.caption_from_source or ''}\n"
        'Respond as plain text, or as JSON {"kind": ..., "description": ..., '
        '"elements": [...]}.'
    )


def describe_image(
    asset: ImageAsset, bundle: DocumentBundle, llm: ChatProvider
) -> ImageDescription:
    """Generate a searchable description for one image.

    The provider may answer in plain text (kind defaults to ``other``) or as
    a JSON object carrying kind/description/elements.
    """
    if not Path(asset.path).is_file():
        raise UnreadableImage(str(asset.path))
    raw = llm.complete([{"role": "user", "content": build_caption_prompt(asset)}]).strip()
    kind, description, elements = "other", raw, ()
    try:
        parsed = json.loads(raw)
    except (json.JSONDecodeError, ValueError):
        parsed = None
    if isinstance(parsed, dict) and parsed.get("description"):
        description = str(parsed["description"])
        if parsed.get("kind") in IMAGE_KINDS:
            kind = parsed["kind"]
        elements = tuple(str(e) for e in parsed.get("elements", []))
    if not description:
        description = asset.path.name
    return ImageDescription(
        image_id=asset.image_id,
        doc_id=bundle.doc_id,
        kind=kind,
        description=description,
        elements=elements,
    )
