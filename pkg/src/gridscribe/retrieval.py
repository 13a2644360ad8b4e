"""Query planning and knowledge retrieval.

A request is decomposed into keyword-tagged sub-requests (by the LLM when
possible, by a rule-based fallback otherwise), retrieval runs in one of
four modes, and the surviving fragments are assembled into the knowledge
context injected into the prompt's middle layer.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

from . import assets
from .errors import EmptyRequestError, StoreMissingError
from .llm import ChatMessage, VALIDATION_TEMPERATURE, complete
from .prompts import extract_json_object

if TYPE_CHECKING:
    from .corpus import SectionIndex
    from .vectorstore import VectorIndex

DEFAULT_K = 4
DEFAULT_CONTEXT_BUDGET = 6000

_WORD_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class RetrievalHit:
    chunk_id: int
    score: float
    text: str


class RetrievalMode(str, Enum):
    NONE = "none"
    OCR_KEYWORD = "ocr_keyword"
    PDF_VECTOR = "pdf_vector"
    ENHANCED_VECTOR = "enhanced_vector"

    @classmethod
    def from_cli(cls, value: str) -> "RetrievalMode":
        aliases = {
            "none": cls.NONE,
            "ocr": cls.OCR_KEYWORD,
            "ocr_keyword": cls.OCR_KEYWORD,
            "pdf": cls.PDF_VECTOR,
            "pdf_vector": cls.PDF_VECTOR,
            "enhanced": cls.ENHANCED_VECTOR,
            "enhanced_vector": cls.ENHANCED_VECTOR,
        }
        try:
            return aliases[value.lower()]
        except KeyError:
            raise ValueError(f"unknown retrieval mode {value!r}") from None


@dataclass(frozen=True)
class SubRequest:
    text: str
    keywords: tuple[str, ...]


@dataclass(frozen=True)
class QueryPlan:
    subrequests: tuple[SubRequest, ...]
    origin: str = "fallback"  # "llm" | "fallback"


@dataclass(frozen=True)
class KnowledgeContext:
    """Reassembled fragments for the prompt's knowledge layer."""

    fragments: tuple[tuple[str, str], ...] = ()  # (source label, text)
    total_chars: int = 0
    mode: RetrievalMode = RetrievalMode.NONE
    k: int = DEFAULT_K


@dataclass
class RetrievalStores:
    """The loaded stores a retrieval mode may need."""

    section_index: "SectionIndex | None" = None
    pdf_index: "VectorIndex | None" = None
    enhanced_index: "VectorIndex | None" = None
    embedder: object | None = None


def fallback_plan(request: str) -> QueryPlan:
    """Rule-based plan: one sub-request, keywords = lowercased words minus
    the bundled stopword list, deduplicated, order preserved."""
    trimmed = request.strip()
    if not trimmed:
        raise EmptyRequestError("request is empty")
    stop = assets.stopwords()
    seen: dict[str, None] = {}
    for word in _WORD_RE.findall(trimmed.lower()):
        if word not in stop:
            seen.setdefault(word, None)
    return QueryPlan(
        subrequests=(SubRequest(text=trimmed, keywords=tuple(seen)),),
        origin="fallback",
    )


def _parse_plan(data) -> QueryPlan | None:
    if not isinstance(data, dict):
        return None
    raw = data.get("subrequests")
    if not isinstance(raw, list) or not raw:
        return None
    subs = []
    for entry in raw:
        if not isinstance(entry, dict):
            return None
        text = entry.get("text")
        if not isinstance(text, str) or not text.strip():
            return None
        keywords = entry.get("keywords", [])
        if not isinstance(keywords, list):
            return None
        cleaned = []
        for kw in keywords:
            if not isinstance(kw, str):
                return None
            kw = kw.strip().lower()
            if kw:
                cleaned.append(kw)
        subs.append(SubRequest(text=text.strip(), keywords=tuple(cleaned)))
    return QueryPlan(subrequests=tuple(subs), origin="llm")


def plan_query(request: str, llm=None) -> QueryPlan:
    """Decompose a request via the LLM, degrading to the rule-based plan
    whenever the backend fails or its output does not match the schema."""
    trimmed = request.strip()
    if not trimmed:
        raise EmptyRequestError("request is empty")
    if llm is None:
        return fallback_plan(trimmed)
    planner = assets.read_text("planner_prompt.txt").strip()
    messages = [
        ChatMessage("system", planner),
        ChatMessage("user", f"Decompose this request into the JSON plan: {trimmed}"),
    ]
    try:
        result = complete(llm, messages, temperature=VALIDATION_TEMPERATURE)
    except Exception:
        return fallback_plan(trimmed)
    plan = _parse_plan(extract_json_object(result.text))
    return plan if plan is not None else fallback_plan(trimmed)


def keyword_search(sections: "SectionIndex", keywords, k: int) -> list[RetrievalHit]:
    """Mode 1: score sections by case-insensitive keyword occurrence counts
    over heading + body; zero-score sections are dropped, ties keep
    document order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scored: list[tuple[int, int]] = []  # (ordinal, score)
    lowered = [kw.lower() for kw in keywords if kw]
    for i, section in enumerate(sections.sections):
        haystack = (" ".join(section.heading_path) + "\n" + section.body).lower()
        score = sum(haystack.count(kw) for kw in lowered)
        if score > 0:
            scored.append((i, score))
    scored.sort(key=lambda t: (-t[1], t[0]))
    hits = []
    for ordinal, score in scored[:k]:
        section = sections.sections[ordinal]
        hits.append(RetrievalHit(chunk_id=ordinal, score=float(score), text=section.body))
    return hits


def _section_label(sections: "SectionIndex", ordinal: int) -> str:
    path = sections.sections[ordinal].heading_path
    return " > ".join(path) if path else "preamble"


def retrieve_context(
    plan: QueryPlan,
    mode: RetrievalMode,
    stores: RetrievalStores | None,
    k: int = DEFAULT_K,
    budget: int = DEFAULT_CONTEXT_BUDGET,
) -> KnowledgeContext:
    """Run per-sub-request retrieval, merge hits in plan order, drop exact
    duplicate texts, and truncate to the character budget at fragment
    granularity."""
    if mode == RetrievalMode.NONE:
        return KnowledgeContext(mode=mode, k=k)

    labeled: list[tuple[str, str]] = []
    if mode == RetrievalMode.OCR_KEYWORD:
        if stores is None or stores.section_index is None:
            raise StoreMissingError("ocr_keyword mode needs a section index")
        for sub in plan.subrequests:
            for hit in keyword_search(stores.section_index, sub.keywords, k):
                labeled.append((_section_label(stores.section_index, hit.chunk_id), hit.text))
    else:
        index = stores.pdf_index if mode == RetrievalMode.PDF_VECTOR else (
            stores.enhanced_index if stores else None
        )
        if stores is None or index is None or stores.embedder is None:
            raise StoreMissingError(f"{mode.value} mode needs a vector index and embedder")
        for sub in plan.subrequests:
            query_text = sub.text
            if sub.keywords:
                query_text = sub.text + " " + " ".join(sub.keywords)
            query = stores.embedder.embed(query_text)
            for hit in index.search(query, k):
                labeled.append((f"chunk {hit.chunk_id}", hit.text))

    fragments: list[tuple[str, str]] = []
    seen_texts: set[str] = set()
    total = 0
    for label, text in labeled:
        if text in seen_texts:
            continue
        if total + len(text) > budget:
            break
        seen_texts.add(text)
        fragments.append((label, text))
        total += len(text)
    return KnowledgeContext(fragments=tuple(fragments), total_chars=total, mode=mode, k=k)
