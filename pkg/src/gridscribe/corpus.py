"""Manual corpus loading, merging, sliding-window chunking and section indexing.

Everything in here is pure and deterministic: the same file bytes and
parameters always produce byte-identical chunk lists and section tables.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidEncodingError, InvalidParamsError, KindMismatchError

OCR_MARKDOWN = "ocr_markdown"
RAW_TEXT = "raw_text"

SOURCE_KINDS = (OCR_MARKDOWN, RAW_TEXT)

DEFAULT_WINDOW = 1000
DEFAULT_STRIDE = 800

_HEADING_RE = re.compile(r"^[ \t]*(#{1,6}) (.*)$")
_FENCE_RE = re.compile(r"^[ \t]*```")


@dataclass(frozen=True)
class SourceDocument:
    """One manual source stream (structured markdown or raw extracted text)."""

    id: str
    kind: str
    text: str
    origin_path: str = ""

    def __post_init__(self) -> None:
        if self.kind not in SOURCE_KINDS:
            raise KindMismatchError(f"unknown source kind {self.kind!r}")


@dataclass(frozen=True)
class DocumentChunk:
    """A windowed slice of a source document.

    ``span`` is the half-open character interval [start, end) into the
    source text; ``text`` is exactly that substring.
    """

    chunk_id: int
    source_id: str
    start: int
    end: int
    text: str
    heading_path: tuple[str, ...] = ()

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class Section:
    heading_path: tuple[str, ...]
    body: str
    span: tuple[int, int]


@dataclass(frozen=True)
class SectionIndex:
    """Ordered, non-overlapping sections of a markdown source."""

    source_id: str
    sections: tuple[Section, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.sections)


def load_source(path: str | Path, kind: str) -> SourceDocument:
    """Load a manual source file, canonicalizing line endings to '\\n'.

    Raises FileNotFoundError for missing files and InvalidEncodingError for
    non-UTF-8 content. No other normalization is applied.
    """
    p = Path(path)
    raw = p.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidEncodingError(f"{p}: not valid UTF-8: {exc}") from exc
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    return SourceDocument(id=p.stem, kind=kind, text=text, origin_path=str(p))


def merge_enhanced(md: SourceDocument, raw: SourceDocument) -> SourceDocument:
    """Concatenate the markdown stream with the raw text stream.

    The result keeps the markdown kind so heading structure in the leading
    part stays usable.
    """
    if md.kind != OCR_MARKDOWN:
        raise KindMismatchError(f"left operand must be {OCR_MARKDOWN}, got {md.kind}")
    if raw.kind != RAW_TEXT:
        raise KindMismatchError(f"right operand must be {RAW_TEXT}, got {raw.kind}")
    return SourceDocument(
        id=f"{md.id}+{raw.id}",
        kind=OCR_MARKDOWN,
        text=md.text + "\n\n" + raw.text,
        origin_path=md.origin_path,
    )


def _heading_context(text: str) -> list[tuple[int, tuple[str, ...]]]:
    """(offset, heading_path) pairs for each heading line, fence-aware."""
    out: list[tuple[int, tuple[str, ...]]] = []
    stack: list[tuple[int, str]] = []
    offset = 0
    in_fence = False
    for line in text.splitlines(keepends=True):
        stripped = line.rstrip("\n")
        if _FENCE_RE.match(stripped):
            in_fence = not in_fence
        elif not in_fence:
            m = _HEADING_RE.match(stripped)
            if m:
                level = len(m.group(1))
                title = m.group(2).strip()
                while stack and stack[-1][0] >= level:
                    stack.pop()
                stack.append((level, title))
                out.append((offset, tuple(t for _, t in stack)))
        offset += len(line)
    return out


def chunk_sliding(
    doc: SourceDocument,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
) -> list[DocumentChunk]:
    """Segment a document into fixed-size overlapping character windows.

    Chunks start at 0, stride, 2*stride, ...; each covers
    [start, min(start+window, len)). A candidate whose span is fully
    contained in the previously emitted chunk's span is skipped, so the
    tail never yields a duplicate fragment. The union of spans covers the
    whole document.
    """
    if window < 1 or stride < 1 or stride > window:
        raise InvalidParamsError(
            f"need window >= 1 and 1 <= stride <= window, got window={window} stride={stride}"
        )
    text = doc.text
    n = len(text)
    headings = _heading_context(text) if doc.kind == OCR_MARKDOWN else []
    chunks: list[DocumentChunk] = []
    prev_span: tuple[int, int] | None = None
    chunk_id = 0
    start = 0
    while start < n:
        end = min(start + window, n)
        if prev_span is not None and start >= prev_span[0] and end <= prev_span[1]:
            start += stride
            continue
        path: tuple[str, ...] = ()
        for off, hp in headings:
            if off <= start:
                path = hp
            else:
                break
        chunks.append(
            DocumentChunk(
                chunk_id=chunk_id,
                source_id=doc.id,
                start=start,
                end=end,
                text=text[start:end],
                heading_path=path,
            )
        )
        chunk_id += 1
        prev_span = (start, end)
        start += stride
    return chunks


def build_section_index(md: SourceDocument) -> SectionIndex:
    """Split a markdown document into heading-delimited sections.

    Text before the first heading becomes a preamble section with an empty
    heading path. Section spans partition the document: no gaps, no
    overlaps. Headings inside code fences are ignored.
    """
    if md.kind != OCR_MARKDOWN:
        raise KindMismatchError(f"section index needs {OCR_MARKDOWN}, got {md.kind}")
    text = md.text
    if not text:
        return SectionIndex(source_id=md.id)

    heading_lines: list[tuple[int, int, tuple[str, ...]]] = []  # (start, line_len, path)
    offset = 0
    in_fence = False
    stack: list[tuple[int, str]] = []
    for line in text.splitlines(keepends=True):
        stripped = line.rstrip("\n")
        if _FENCE_RE.match(stripped):
            in_fence = not in_fence
        elif not in_fence:
            m = _HEADING_RE.match(stripped)
            if m:
                level = len(m.group(1))
                title = m.group(2).strip()
                while stack and stack[-1][0] >= level:
                    stack.pop()
                stack.append((level, title))
                heading_lines.append((offset, len(line), tuple(t for _, t in stack)))
        offset += len(line)

    sections: list[Section] = []
    first = heading_lines[0][0] if heading_lines else len(text)
    if first > 0:
        sections.append(Section(heading_path=(), body=text[:first].strip("\n"), span=(0, first)))
    for i, (h_start, h_len, path) in enumerate(heading_lines):
        span_end = heading_lines[i + 1][0] if i + 1 < len(heading_lines) else len(text)
        body = text[h_start + h_len : span_end].strip("\n")
        sections.append(Section(heading_path=path, body=body, span=(h_start, span_end)))
    return SectionIndex(source_id=md.id, sections=tuple(sections))


@dataclass(frozen=True)
class CorpusManifest:
    """Parsed form of the corpus manifest JSON file."""

    sources: tuple[tuple[str, str], ...]  # (path, kind) in listed order
    window: int = DEFAULT_WINDOW
    stride: int = DEFAULT_STRIDE


def load_manifest(path: str | Path) -> CorpusManifest:
    p = Path(path)
    data = json.loads(p.read_text(encoding="utf-8"))
    sources = []
    for entry in data.get("sources", []):
        kind = entry.get("kind")
        if kind not in SOURCE_KINDS:
            raise KindMismatchError(f"manifest source kind {kind!r} not in {SOURCE_KINDS}")
        src = Path(entry["path"])
        if not src.is_absolute():
            src = p.parent / src
        sources.append((str(src), kind))
    return CorpusManifest(
        sources=tuple(sources),
        window=int(data.get("window", DEFAULT_WINDOW)),
        stride=int(data.get("stride", DEFAULT_STRIDE)),
    )
