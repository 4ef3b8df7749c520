"""Unified persistent store: one record set, two retrieval paths.

Every record carries both its BM25 postings and its dense vector, updated
atomically under a single writer lock so readers never see one structure
ahead of the other. Vector search is an exact exhaustive scan (desk-scale
corpora; exactness keeps the oracles simple).

Index file layout (version 1, written in binary mode):

    line 0:  header JSON {"magic": "MUIX", "version": 1, "dim", "count",
             "checksum"}  -- checksum is sha256 hex of every byte after
             this line
    next N:  one JSON record per line
    last:    postings JSON {"postings": {term: [[record_id, tf], ...]}}
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import Vector
from .errors import CorruptIndex, DimMismatch

MAGIC = "MUIX"
VERSION = 1

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, keep tokens of length >= 2.

    No stemming and no stopword removal: rare technical terms must match
    exactly.
    """
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if len(t) >= 2]


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self) -> None:
        if self.k1 <= 0:
            raise ValueError("k1 must be > 0")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must be in [0, 1]")


@dataclass(frozen=True)
class IndexRecord:
    record_id: str
    doc_id: str
    modality: str  # text | image
    body: str
    vector: Vector
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.modality not in ("text", "image"):
            raise ValueError(f"bad modality {self.modality!r}")
        if not self.body:
            raise ValueError(f"record {self.record_id} has empty body")
        if self.modality == "image" and not self.metadata.get("image_path"):
            raise ValueError(f"image record {self.record_id} missing metadata.image_path")


@dataclass(frozen=True)
class IngestStats:
    added: int
    replaced: int
    total: int


@dataclass(frozen=True)
class SearchHit:
    record_id: str
    modality: str
    score: float
    rank: int
    retriever: str  # keyword | semantic | fused | reranked
    snippet: str
    metadata: dict = field(default_factory=dict)


def make_snippet(body: str, limit: int = 160) -> str:
    return " ".join(body.split())[:limit]


class ReadWriteLock:
    """Many readers or one writer."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if self._readers == 0:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


class Index:
    """In-memory unified index with on-disk persistence."""

    def __init__(self, dim: int | None = None):
        self.dim = dim
        self._records: dict[str, IndexRecord] = {}
        self._postings: dict[str, dict[str, int]] = {}
        self._doc_len: dict[str, int] = {}
        self._lock = ReadWriteLock()
        self._matrix: np.ndarray | None = None
        self._row_ids: list[str] = []

    # -- mutation ----------------------------------------------------------

    def upsert(self, records: list[IndexRecord]) -> IngestStats:
        for rec in records:
            if self.dim is not None and rec.vector.dim != self.dim:
                raise DimMismatch(
                    f"record {rec.record_id}: dim {rec.vector.dim} != index dim {self.dim}"
                )
        added = replaced = 0
        with self._lock.write():
            for rec in records:
                if self.dim is None:
                    self.dim = rec.vector.dim
                if rec.record_id in self._records:
                    replaced += 1
                    self._remove_postings(rec.record_id)
                else:
                    added += 1
                self._records[rec.record_id] = rec
                self._add_postings(rec)
            self._matrix = None
            return IngestStats(added=added, replaced=replaced, total=len(self._records))

    def _add_postings(self, rec: IndexRecord) -> None:
        tokens = tokenize(rec.body)
        self._doc_len[rec.record_id] = len(tokens)
        for tok in tokens:
            self._postings.setdefault(tok, {})
            self._postings[tok][rec.record_id] = self._postings[tok].get(rec.record_id, 0) + 1

    def _remove_postings(self, record_id: str) -> None:
        self._doc_len.pop(record_id, None)
        for tok in list(self._postings):
            if record_id in self._postings[tok]:
                del self._postings[tok][record_id]
                if not self._postings[tok]:
                    del self._postings[tok]

    # -- queries -----------------------------------------------------------

    def get(self, record_id: str) -> IndexRecord | None:
        with self._lock.read():
            return self._records.get(record_id)

    def __len__(self) -> int:
        return len(self._records)

    @property
    def doc_ids(self) -> list[str]:
        with self._lock.read():
            return sorted({r.doc_id for r in self._records.values()})

    def titles(self) -> list[tuple[str, str]]:
        """Distinct (doc_id, title) pairs, sorted by doc_id."""
        with self._lock.read():
            seen: dict[str, str] = {}
            for rec in self._records.values():
                seen.setdefault(rec.doc_id, str(rec.metadata.get("title", "")))
            return sorted(seen.items())

    def keyword_search(
        self, query: str, k: int, params: Bm25Params = Bm25Params()
    ) -> list[SearchHit]:
        """BM25 over records sharing at least one query term."""
        if k < 1:
            raise ValueError("k must be >= 1")
        terms = sorted(set(tokenize(query)))
        with self._lock.read():
            n_docs = len(self._records)
            if not terms or n_docs == 0:
                return []
            avgdl = sum(self._doc_len.values()) / n_docs
            scores: dict[str, float] = {}
            for term in terms:
                plist = self._postings.get(term)
                if not plist:
                    continue
                df = len(plist)
                idf = math.log((n_docs - df + 0.5) / (df + 0.5))
                for rid, tf in plist.items():
                    dl = self._doc_len[rid]
                    denom = tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl)
                    scores[rid] = scores.get(rid, 0.0) + idf * tf * (params.k1 + 1.0) / denom
            ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
            return [self._hit(rid, score, rank, "keyword") for rank, (rid, score) in enumerate(ranked, 1)]

    def semantic_search(self, query_vec: Vector, k: int) -> list[SearchHit]:
        """Exact top-k by cosine (dot product of normalized vectors)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        with self._lock.read():
            if not self._records:
                return []
            if self.dim is not None and query_vec.dim != self.dim:
                raise DimMismatch(f"query dim {query_vec.dim} != index dim {self.dim}")
            if self._matrix is None:
                self._row_ids = sorted(self._records)
                self._matrix = np.stack(
                    [self._records[rid].vector.as_array() for rid in self._row_ids]
                )
            sims = self._matrix @ query_vec.as_array()
            order = sorted(range(len(self._row_ids)), key=lambda i: (-sims[i], self._row_ids[i]))
            hits = []
            for rank, i in enumerate(order[:k], 1):
                hits.append(self._hit(self._row_ids[i], float(sims[i]), rank, "semantic"))
            return hits

    def _hit(self, record_id: str, score: float, rank: int, retriever: str) -> SearchHit:
        rec = self._records[record_id]
        metadata = dict(rec.metadata)
        metadata.setdefault("doc_id", rec.doc_id)
        return SearchHit(
            record_id=record_id,
            modality=rec.modality,
            score=score,
            rank=rank,
            retriever=retriever,
            snippet=make_snippet(rec.body),
            metadata=metadata,
        )

    # -- persistence -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        with self._lock.read():
            lines = []
            for rid in sorted(self._records):
                rec = self._records[rid]
                lines.append(
                    json.dumps(
                        {
                            "record_id": rec.record_id,
                            "doc_id": rec.doc_id,
                            "modality": rec.modality,
                            "body": rec.body,
                            "vector": list(rec.vector.values),
                            "metadata": rec.metadata,
                        },
                        sort_keys=True,
                    )
                )
            postings = {
                term: sorted([rid, tf] for rid, tf in plist.items())
                for term, plist in self._postings.items()
            }
            lines.append(json.dumps({"postings": postings}, sort_keys=True))
            payload = ("\n".join(lines) + "\n").encode("utf-8")
            header = json.dumps(
                {
                    "magic": MAGIC,
                    "version": VERSION,
                    "dim": self.dim,
                    "count": len(self._records),
                    "checksum": hashlib.sha256(payload).hexdigest(),
                }
            ).encode("utf-8")
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_bytes(header + b"\n" + payload)

    @classmethod
    def load(cls, path: str | Path) -> "Index":
        raw = Path(path).read_bytes()
        nl = raw.find(b"\n")
        if nl < 0:
            raise CorruptIndex("missing header line")
        try:
            header = json.loads(raw[:nl].decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CorruptIndex(f"bad header: {exc}") from exc
        if header.get("magic") != MAGIC:
            raise CorruptIndex(f"bad magic {header.get('magic')!r}")
        if header.get("version") != VERSION:
            raise CorruptIndex(f"unsupported version {header.get('version')!r}")
        payload = raw[nl + 1 :]
        if hashlib.sha256(payload).hexdigest() != header.get("checksum"):
            raise CorruptIndex("checksum mismatch")

        idx = cls(dim=header.get("dim"))
        lines = payload.decode("utf-8").splitlines()
        count = int(header.get("count", -1))
        if len(lines) != count + 1:
            raise CorruptIndex(f"expected {count} records, found {len(lines) - 1}")
        try:
            for line in lines[:count]:
                obj = json.loads(line)
                rec = IndexRecord(
                    record_id=obj["record_id"],
                    doc_id=obj["doc_id"],
                    modality=obj["modality"],
                    body=obj["body"],
                    vector=Vector(tuple(obj["vector"])),
                    metadata=obj["metadata"],
                )
                idx._records[rec.record_id] = rec
            postings_obj = json.loads(lines[count])["postings"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CorruptIndex(f"bad payload: {exc}") from exc
        idx._postings = {
            term: {rid: int(tf) for rid, tf in pairs} for term, pairs in postings_obj.items()
        }
        for rid in idx._records:
            idx._doc_len[rid] = 0
        for plist in idx._postings.values():
            for rid, tf in plist.items():
                idx._doc_len[rid] = idx._doc_len.get(rid, 0) + tf
        return idx
