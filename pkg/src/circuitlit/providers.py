"""Provider abstractions: chat, rerank, and document fetch.

Three modes exist for each provider family:

* remote   -- real HTTP services (needs endpoint + api key env var)
* fallback -- deterministic offline stand-ins, no secrets, no network
* scripted -- fixture playback keyed by call order, for tests and demos

The fallback chat provider is a tiny rule-based model: it recognizes the
package's own prompt shapes (contextualization, image captioning, the
tool-use grammar, context-grounded answering) and produces deterministic
output for each, so the whole stack stays exercisable offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

from .errors import FetchNotFound, ProviderError, UnsupportedKind

ChatMessage = Mapping[str, str]

FETCH_TIMEOUT_ENV = "CIRCUITLIT_FETCH_TIMEOUT"


class ChatProvider(Protocol):
    def complete(self, messages: Sequence[ChatMessage]) -> str: ...


class RerankProvider(Protocol):
    def rerank(self, query: str, documents: Sequence[str]) -> list[int]: ...


# ---------------------------------------------------------------------------
# Chat providers
# ---------------------------------------------------------------------------


def _first_sentence(text: str, limit: int = 200) -> str:
    text = " ".join(text.split())
    m = re.search(r"[.!?]\s", text)
    if m and m.end() <= limit:
        return text[: m.end()].strip()
    return text[:limit].strip()


class FallbackChatProvider:
    """Deterministic offline chat model.

    Dispatches on the leading instruction of the prompt; every branch is a
    pure function of the message list.
    """

    def __init__(self) -> None:
        self.calls = 0

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        self.calls += 1
        last = messages[-1]["content"] if messages else ""
        head = messages[0]["content"] if messages else ""

        if last.startswith("Situate this excerpt"):
            title = _prompt_field(last, "Title") or "untitled"
            ordinal = _prompt_field(last, "Chunk") or "?"
            return f'This excerpt is part {ordinal} of "{title}".'

        if last.startswith("Describe the image"):
            caption = _prompt_field(last, "Caption")
            filename = _prompt_field(last, "Image file") or "image"
            return caption if caption else filename

        if "Thought/Action grammar" in head or "Thought/Action grammar" in last:
            return self._agent_turn(messages)

        if last.startswith("Answer the question using the context"):
            body = _prompt_field(last, "Question") or ""
            ctx = re.search(r"\[1\]\s*(.+)", last)
            grounding = _first_sentence(ctx.group(1)) if ctx else "no retrieved context"
            return f"Regarding {body!r}: {grounding} [1]"

        return _first_sentence(last) or "OK."

    def _agent_turn(self, messages: Sequence[ChatMessage]) -> str:
        last = messages[-1]["content"]
        if last.startswith("Observation:"):
            summary = _first_sentence(last[len("Observation:") :], limit=400)
            return (
                "Thought: The retrieved material is sufficient to answer.\n"
                f"Final Answer: {summary}"
            )
        question = next(
            (m["content"] for m in messages if m.get("role") == "user"), ""
        )
        return (
            "Thought: Search the database for material relevant to the question.\n"
            "Action: search_db\n"
            f"Action Input: {question}"
        )


def _prompt_field(prompt: str, name: str) -> str:
    m = re.search(rf"^{re.escape(name)}:\s*(.*)$", prompt, re.MULTILINE)
    return m.group(1).strip() if m else ""


class ScriptedChatProvider:
    """Plays back a fixed sequence of model outputs, one per call."""

    def __init__(self, outputs: Sequence[str], repeat_last: bool = False):
        self._outputs = list(outputs)
        self._repeat_last = repeat_last
        self.calls = 0

    @classmethod
    def from_jsonl(cls, path: str | Path, repeat_last: bool = False) -> "ScriptedChatProvider":
        outputs = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            outputs.append(rec["output"] if isinstance(rec, dict) else str(rec))
        return cls(outputs, repeat_last=repeat_last)

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        if self.calls >= len(self._outputs):
            if self._repeat_last and self._outputs:
                self.calls += 1
                return self._outputs[-1]
            raise ProviderError("scripted chat provider exhausted")
        out = self._outputs[self.calls]
        self.calls += 1
        return out


class KeyedScriptedChatProvider:
    """Returns the output whose key appears in the prompt (first match wins)."""

    def __init__(self, mapping: Mapping[str, str], default: str | None = None):
        self._mapping = dict(mapping)
        self._default = default
        self.calls = 0

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        self.calls += 1
        joined = "\n".join(m["content"] for m in messages)
        for key, out in self._mapping.items():
            if key in joined:
                return out
        if self._default is not None:
            return self._default
        raise ProviderError("no scripted output matches the prompt")


class HttpChatProvider:
    """Remote chat endpoint: ``{"messages": [...]} -> {"text": "..."}``."""

    def __init__(self, endpoint: str, api_key_env: str = "", timeout: float = 60.0):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self._timeout = timeout
        self.calls = 0

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        import httpx

        self.calls += 1
        headers = {}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if not key:
                raise ProviderError(f"api key env {self.api_key_env} not set")
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = httpx.post(
                self.endpoint,
                json={"messages": [dict(m) for m in messages]},
                headers=headers,
                timeout=self._timeout,
            )
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise ProviderError(f"chat request failed: {exc}", retryable=True) from exc
        return str(resp.json().get("text", ""))


# ---------------------------------------------------------------------------
# Rerank providers
# ---------------------------------------------------------------------------


class IdentityRerankProvider:
    """Offline fallback: preserves the fused order."""

    def rerank(self, query: str, documents: Sequence[str]) -> list[int]:
        return list(range(len(documents)))


class FnRerankProvider:
    """Test helper wrapping an arbitrary ordering function."""

    def __init__(self, fn: Callable[[str, Sequence[str]], list[int]]):
        self._fn = fn

    def rerank(self, query: str, documents: Sequence[str]) -> list[int]:
        return self._fn(query, documents)


class HttpRerankProvider:
    """Remote reranker: ``{"query", "documents"} -> {"order": [indices]}``."""

    def __init__(self, endpoint: str, api_key_env: str = "", timeout: float = 30.0):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self._timeout = timeout

    def rerank(self, query: str, documents: Sequence[str]) -> list[int]:
        import httpx

        headers = {}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if not key:
                raise ProviderError(f"api key env {self.api_key_env} not set")
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = httpx.post(
                self.endpoint,
                json={"query": query, "documents": list(documents)},
                headers=headers,
                timeout=self._timeout,
            )
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise ProviderError(f"rerank request failed: {exc}", retryable=True) from exc
        order = resp.json().get("order")
        if not isinstance(order, list):
            raise ProviderError("rerank response malformed")
        return [int(i) for i in order]


# ---------------------------------------------------------------------------
# Fetch providers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FetchRequest:
    kind: str  # url | arxiv_id | title_query
    value: str
    dest_dir: Path

    def __post_init__(self) -> None:
        if self.kind not in ("url", "arxiv_id", "title_query"):
            raise UnsupportedKind(self.kind)
        if not self.value:
            raise ValueError("fetch request value is empty")


@dataclass(frozen=True)
class FetchResult:
    doc_path: Path
    source_uri: str
    bytes: int
    needs_extraction: bool


class FetchProvider(Protocol):
    def fetch(self, req: FetchRequest) -> tuple[bytes, str, str]:
        """Return (payload, source_uri, suffix)."""
        ...


class LocalFixtureFetchProvider:
    """Serves documents from a local directory, no network.

    A request for id ``X`` resolves to ``<fixture_dir>/X.json`` (a ready
    bundle manifest) or ``<fixture_dir>/X.pdf`` (raw document needing
    extraction), whichever exists.
    """

    def __init__(self, fixture_dir: str | Path):
        self.fixture_dir = Path(fixture_dir)

    def fetch(self, req: FetchRequest) -> tuple[bytes, str, str]:
        stem = req.value
        if req.kind == "url":
            stem = req.value.rstrip("/").rsplit("/", 1)[-1]
            stem = re.sub(r"\.(pdf|json)$", "", stem)
        for suffix in (".json", ".pdf"):
            cand = self.fixture_dir / f"{stem}{suffix}"
            if cand.is_file():
                return cand.read_bytes(), f"fixture://{cand.name}", suffix
        raise FetchNotFound(req.value)


class HttpFetchProvider:
    """Fetches direct PDF URLs or arxiv-style ids via an id->URL template."""

    ARXIV_TEMPLATE = "https://arxiv.org/pdf/{id}"

    def __init__(self, timeout: float | None = None):
        if timeout is None:
            timeout = float(os.environ.get(FETCH_TIMEOUT_ENV, "60"))
        self._timeout = timeout

    def fetch(self, req: FetchRequest) -> tuple[bytes, str, str]:
        import httpx

        if req.kind == "title_query":
            raise UnsupportedKind(
                "title_query", "scholarly search scraping is not supported; use a URL or id"
            )
        url = req.value if req.kind == "url" else self.ARXIV_TEMPLATE.format(id=req.value)
        try:
            resp = httpx.get(url, timeout=self._timeout, follow_redirects=True)
            if resp.status_code == 404:
                raise FetchNotFound(req.value)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            from .errors import NetworkError

            raise NetworkError(f"fetch failed: {exc}") from exc
        suffix = ".json" if url.endswith(".json") else ".pdf"
        return resp.content, url, suffix


def content_hash_name(payload: bytes, suffix: str) -> str:
    return hashlib.sha256(payload).hexdigest()[:16] + suffix


@dataclass
class ProviderSet:
    """The full provider bundle one engine instance runs with."""

    chat: ChatProvider
    embedder: object
    reranker: RerankProvider
    fetcher: FetchProvider | None = None
    extra: dict = field(default_factory=dict)
