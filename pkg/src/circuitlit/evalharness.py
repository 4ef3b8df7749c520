"""Dataset-driven evaluation: citation metrics, answer judging, and the
cost/latency model comparing retrieval against full-corpus-in-context
prompting.

Headline ratios (cost, latency) are properties of the shipped default price
and window configuration, not measurements of any live provider; edit
CostModelConfig to model other deployments.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from .agent import SessionLimits, ToolRegistry, Transcript, run_session
from .corpus import ChunkConfig, DocumentBundle, chunk_document
from .providers import ChatProvider
from .retrieve import assemble_context, estimate_tokens, render_context
from .tools import SearchEngine

EQ_ID = re.compile(r"eq:[A-Za-z0-9_.@:-]+")

MODALITY_CLASSES = ("text", "image", "equation", "overall")


@dataclass(frozen=True)
class CitationSets:
    texts: frozenset[str] = frozenset()
    images: frozenset[str] = frozenset()
    equations: frozenset[str] = frozenset()

    @classmethod
    def from_json(cls, data: dict) -> "CitationSets":
        return cls(
            texts=frozenset(data.get("texts", [])),
            images=frozenset(data.get("images", [])),
            equations=frozenset(data.get("equations", [])),
        )

    def by_modality(self, modality: str) -> frozenset[str]:
        return {"text": self.texts, "image": self.images, "equation": self.equations}[modality]


@dataclass(frozen=True)
class QaItem:
    qid: str
    question: str
    gold_answer: str
    gold_citations: CitationSets
    modality_class: str

    def __post_init__(self) -> None:
        if self.modality_class not in MODALITY_CLASSES:
            raise ValueError(f"{self.qid}: bad modality_class {self.modality_class!r}")


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    count: int = 0
    flagged_empty_predictions: int = 0


@dataclass
class MetricReport:
    per_class: dict[str, ClassMetrics]
    overall_recall: float
    items_evaluated: int
    items_skipped: int
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "per_class": {
                name: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "count": m.count,
                    "flagged_empty_predictions": m.flagged_empty_predictions,
                }
                for name, m in self.per_class.items()
            },
            "overall_recall": self.overall_recall,
            "items_evaluated": self.items_evaluated,
            "items_skipped": self.items_skipped,
            "metadata": self.metadata,
        }


def citation_prf(predicted: frozenset[str], gold: frozenset[str]) -> tuple[float, float, float, bool]:
    """(precision, recall, f1, flagged): empty predictions flag precision 0."""
    inter = len(predicted & gold)
    flagged = not predicted
    precision = inter / len(predicted) if predicted else 0.0
    recall = inter / len(gold) if gold else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return precision, recall, f1, flagged


def score_citations(predicted: CitationSets, gold: CitationSets) -> dict[str, ClassMetrics]:
    """Per-modality metrics for a single item (classes with gold only)."""
    out = {}
    for modality in ("text", "image", "equation"):
        gold_set = gold.by_modality(modality)
        if not gold_set:
            continue
        p, r, f1, flagged = citation_prf(predicted.by_modality(modality), gold_set)
        out[modality] = ClassMetrics(
            precision=p, recall=r, f1=f1, count=1, flagged_empty_predictions=int(flagged)
        )
    return out


# ---------------------------------------------------------------------------
# Judges
# ---------------------------------------------------------------------------


class AnswerJudge(Protocol):
    def judge(self, predicted: str, gold: str) -> bool: ...


def _norm_tokens(text: str) -> set[str]:
    return {t for t in re.split(r"[^0-9a-z]+", text.lower()) if len(t) >= 2}


class ExactMatchJudge:
    def judge(self, predicted: str, gold: str) -> bool:
        return " ".join(predicted.split()).lower() == " ".join(gold.split()).lower()


class TokenOverlapJudge:
    """Offline default: gold-token coverage at a threshold."""

    def __init__(self, threshold: float = 0.5):
        self.threshold = threshold

    def judge(self, predicted: str, gold: str) -> bool:
        gold_tokens = _norm_tokens(gold)
        if not gold_tokens:
            return True
        overlap = len(_norm_tokens(predicted) & gold_tokens) / len(gold_tokens)
        return overlap >= self.threshold


class LlmJudge:
    def __init__(self, chat: ChatProvider):
        self.chat = chat

    def judge(self, predicted: str, gold: str) -> bool:
        prompt = (
            "Does the predicted answer convey the gold answer? Reply yes or no.\n"
            f"Gold: {gold}\nPredicted: {predicted}"
        )
        reply = self.chat.complete([{"role": "user", "content": prompt}])
        return reply.strip().lower().startswith("yes")


# ---------------------------------------------------------------------------
# Evaluation targets (rag mode, agent mode)
# ---------------------------------------------------------------------------


@dataclass
class RagTarget:
    """Retrieval + single generation call; citations from the context block."""

    engine: SearchEngine
    chat: ChatProvider
    budget_tokens: int = 2000

    def answer(self, item: QaItem) -> tuple[str, CitationSets]:
        hits = self.engine.search(item.question)
        block = assemble_context(hits, self.budget_tokens, index=self.engine.index)
        prompt = (
            "Answer the question using the context. Cite entries like [1].\n"
            f"Question: {item.question}\n"
            f"{render_context(block)}"
        )
        text = self.chat.complete([{"role": "user", "content": prompt}])
        texts = frozenset(e.record_id for e in block.entries if e.modality == "text")
        images = frozenset(e.record_id for e in block.entries if e.modality == "image")
        return text, CitationSets(
            texts=texts, images=images, equations=frozenset(EQ_ID.findall(text))
        )


@dataclass
class AgentTarget:
    """Full reasoning session per item; citations from the transcript."""

    registry: ToolRegistry
    chat: ChatProvider | Callable[[QaItem], ChatProvider]
    limits: SessionLimits = field(default_factory=SessionLimits)

    def answer(self, item: QaItem) -> tuple[str, CitationSets]:
        chat = self.chat(item) if callable(self.chat) else self.chat
        transcript: Transcript = run_session(item.question, self.registry, chat, self.limits)
        texts = frozenset(c.record_id for c in transcript.citations if c.modality == "text")
        images = frozenset(c.record_id for c in transcript.citations if c.modality == "image")
        return transcript.final_answer, CitationSets(
            texts=texts,
            images=images,
            equations=frozenset(EQ_ID.findall(transcript.final_answer)),
        )


def load_dataset(path: str | Path) -> list[QaItem]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    items = []
    for raw in data["items"]:
        items.append(
            QaItem(
                qid=raw["qid"],
                question=raw["question"],
                gold_answer=raw["gold_answer"],
                gold_citations=CitationSets.from_json(raw.get("gold_citations", {})),
                modality_class=raw.get("modality_class", "overall"),
            )
        )
    return items


def run_eval(
    dataset_path: str | Path,
    target,
    judge: AnswerJudge | None = None,
) -> MetricReport:
    """Evaluate every item; per-item failures are skipped with a flag and
    excluded from denominators."""
    judge = judge or TokenOverlapJudge()
    items = load_dataset(dataset_path)
    sums: dict[str, list[float]] = {m: [0.0, 0.0, 0.0] for m in ("text", "image", "equation")}
    counts: dict[str, int] = {m: 0 for m in ("text", "image", "equation")}
    flags: dict[str, int] = {m: 0 for m in ("text", "image", "equation")}
    judged_correct = 0
    evaluated = 0
    skipped: list[str] = []

    for item in items:
        try:
            answer, predicted = target.answer(item)
        except Exception as exc:  # per-item containment
            skipped.append(f"{item.qid}: {type(exc).__name__}: {exc}")
            continue
        evaluated += 1
        if judge.judge(answer, item.gold_answer):
            judged_correct += 1
        for modality, metrics in score_citations(predicted, item.gold_citations).items():
            sums[modality][0] += metrics.precision
            sums[modality][1] += metrics.recall
            sums[modality][2] += metrics.f1
            counts[modality] += 1
            flags[modality] += metrics.flagged_empty_predictions

    per_class = {}
    for modality in ("text", "image", "equation"):
        n = counts[modality]
        per_class[modality] = ClassMetrics(
            precision=sums[modality][0] / n if n else 0.0,
            recall=sums[modality][1] / n if n else 0.0,
            f1=sums[modality][2] / n if n else 0.0,
            count=n,
            flagged_empty_predictions=flags[modality],
        )
    overall = judged_correct / evaluated if evaluated else 0.0
    per_class["overall"] = ClassMetrics(
        precision=overall, recall=overall, f1=overall, count=evaluated
    )
    return MetricReport(
        per_class=per_class,
        overall_recall=overall,
        items_evaluated=evaluated,
        items_skipped=len(skipped),
        metadata={"skipped": skipped, "dataset": str(dataset_path)},
    )


# ---------------------------------------------------------------------------
# Cost / latency model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostModelConfig:
    """Default prices and limits are editable config, 2024-era shaped; the
    page-token density is the one calibrated constant (1400 tokens/page)."""

    tokens_per_page: int = 1400
    price_in_per_1k: float = 0.0025
    price_out_per_1k: float = 0.01
    embed_price_per_1k: float = 0.0001
    context_window_tokens: int = 140_000
    retrieval_context_tokens: int = 10_000
    question_tokens: int = 100
    output_tokens: int = 500
    latency_fixed_s: float = 2.0
    latency_per_token_s: float = 5e-5
    retrieval_overhead_s: float = 0.5
    ctx_prompt_overhead_tokens: int = 50
    ctx_blurb_tokens: int = 80
    caption_prompt_tokens: int = 300
    caption_output_tokens: int = 150

    def __post_init__(self) -> None:
        for name in (
            "tokens_per_page",
            "context_window_tokens",
            "retrieval_context_tokens",
            "question_tokens",
            "output_tokens",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class CostLatency:
    cost: float
    latency: float
    feasible: bool
    input_tokens: int


def cost_latency(
    pages: int, mode: str, cfg: CostModelConfig = CostModelConfig()
) -> CostLatency:
    """Model one query over a corpus of ``pages`` pages.

    full_context stuffs the whole corpus into the prompt (infeasible past the
    window); retrieval sends a fixed context independent of corpus size.
    """
    if pages < 1:
        raise ValueError("pages must be >= 1")
    if mode == "full_context":
        input_tokens = pages * cfg.tokens_per_page + cfg.question_tokens
        extra_latency = 0.0
    elif mode == "retrieval":
        input_tokens = cfg.retrieval_context_tokens + cfg.question_tokens
        extra_latency = cfg.retrieval_overhead_s
    else:
        raise ValueError(f"unknown mode {mode!r}")
    feasible = input_tokens <= cfg.context_window_tokens
    cost = (
        input_tokens / 1000.0 * cfg.price_in_per_1k
        + cfg.output_tokens / 1000.0 * cfg.price_out_per_1k
    )
    latency = (
        cfg.latency_fixed_s
        + cfg.latency_per_token_s * (input_tokens + cfg.output_tokens)
        + extra_latency
    )
    return CostLatency(cost=cost, latency=latency, feasible=feasible, input_tokens=input_tokens)


def max_feasible_full_pages(cfg: CostModelConfig = CostModelConfig()) -> int:
    return (cfg.context_window_tokens - cfg.question_tokens) // cfg.tokens_per_page


@dataclass(frozen=True)
class PreprocessingCost:
    contextualize: float
    caption: float
    embed: float

    @property
    def total(self) -> float:
        return self.contextualize + self.caption + self.embed


def preprocessing_cost(
    bundle: DocumentBundle,
    cfg: CostModelConfig = CostModelConfig(),
    chunk_cfg: ChunkConfig = ChunkConfig(),
) -> PreprocessingCost:
    """One-time per-paper ingest cost under the configured prices."""
    chunks = chunk_document(bundle, chunk_cfg)
    ctx_in = sum(estimate_tokens(c.text) + cfg.ctx_prompt_overhead_tokens for c in chunks)
    ctx_out = len(chunks) * cfg.ctx_blurb_tokens
    ctx_cost = ctx_in / 1000.0 * cfg.price_in_per_1k + ctx_out / 1000.0 * cfg.price_out_per_1k

    n_images = len(bundle.images)
    cap_cost = (
        n_images * cfg.caption_prompt_tokens / 1000.0 * cfg.price_in_per_1k
        + n_images * cfg.caption_output_tokens / 1000.0 * cfg.price_out_per_1k
    )

    embed_tokens = sum(estimate_tokens(c.text) + cfg.ctx_blurb_tokens for c in chunks)
    embed_tokens += n_images * cfg.caption_output_tokens
    embed_cost = embed_tokens / 1000.0 * cfg.embed_price_per_1k
    return PreprocessingCost(contextualize=ctx_cost, caption=cap_cost, embed=embed_cost)


def cost_curve(
    max_pages: int, cfg: CostModelConfig = CostModelConfig()
) -> list[dict]:
    """Cost/latency table for both modes at 1..max_pages, for plotting."""
    rows = []
    for pages in range(1, max_pages + 1):
        full = cost_latency(pages, "full_context", cfg)
        ret = cost_latency(pages, "retrieval", cfg)
        rows.append(
            {
                "pages": pages,
                "full_cost": full.cost,
                "full_latency": full.latency,
                "full_feasible": full.feasible,
                "retrieval_cost": ret.cost,
                "retrieval_latency": ret.latency,
            }
        )
    return rows
