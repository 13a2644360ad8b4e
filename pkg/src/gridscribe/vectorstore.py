"""Exact flat vector index with binary persistence.

The corpus is a single manual (hundreds of chunks), so an exhaustive
cosine scan is both fast enough and exactly reproducible, which gives
tests a free brute-force oracle. Scores are defined as the correctly
rounded sum (math.fsum) of elementwise products of the stored float32
components against the float64 query, clipped to [-1, 1]; any
independent implementation of that definition reproduces them bit for
bit, so rankings and tie-breaks are stable across code paths.

File layout: magic ``GSIX1``, dim (u32 LE), count (u32 LE), then per
entry chunk_id (u32 LE) + dim float32 values. Chunk texts live alongside
in ``<path>.texts.jsonl``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import DocumentChunk
from .errors import CorruptIndexError, DimMismatchError
from .retrieval import RetrievalHit

MAGIC = b"GSIX1"


@dataclass
class VectorIndex:
    """Immutable-after-build flat index over (chunk_id, vector) entries."""

    dim: int
    chunk_ids: list[int] = field(default_factory=list)
    matrix: np.ndarray | None = None  # shape (n, dim) float32
    texts: dict[int, str] = field(default_factory=dict)
    embedder_id: str = ""
    built_at: str | None = None

    def __len__(self) -> int:
        return len(self.chunk_ids)

    def search(self, query: np.ndarray, k: int) -> list[RetrievalHit]:
        """Top-k entries by cosine similarity.

        Cosine against a zero vector (either side) is defined as 0. Hits
        are sorted by score descending, ties broken by ascending chunk_id.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dim,):
            raise DimMismatchError(f"query dim {q.shape} != index dim ({self.dim},)")
        if not self.chunk_ids:
            return []
        assert self.matrix is not None
        qlist = [float(v) for v in q]
        scores = []
        for row in range(len(self.chunk_ids)):
            s = math.fsum(float(a) * b for a, b in zip(self.matrix[row], qlist))
            scores.append(min(1.0, max(-1.0, s)))
        order = sorted(range(len(self.chunk_ids)), key=lambda i: (-scores[i], self.chunk_ids[i]))
        hits = []
        for i in order[: min(k, len(order))]:
            cid = self.chunk_ids[i]
            hits.append(RetrievalHit(chunk_id=cid, score=scores[i], text=self.texts[cid]))
        return hits


def build_index(chunks: Sequence[DocumentChunk], embedder) -> VectorIndex:
    """Embed every chunk and assemble the flat index, order preserved."""
    vectors = [embedder.embed(c.text) for c in chunks]
    matrix = (
        np.stack(vectors).astype(np.float32)
        if vectors
        else np.zeros((0, embedder.dim), dtype=np.float32)
    )
    return VectorIndex(
        dim=embedder.dim,
        chunk_ids=[c.chunk_id for c in chunks],
        matrix=matrix,
        texts={c.chunk_id: c.text for c in chunks},
        embedder_id=embedder.id,
        built_at=datetime.now(timezone.utc).isoformat(),
    )


def persist_index(index: VectorIndex, path: str | Path) -> None:
    """Write the binary index and its JSON-lines texts sidecar.

    The persisted form is byte-identical for identical build inputs: the
    in-memory build timestamp is deliberately not written.
    """
    p = Path(path)
    assert index.matrix is not None or not index.chunk_ids
    parts = [MAGIC, struct.pack("<II", index.dim, len(index.chunk_ids))]
    for row, cid in enumerate(index.chunk_ids):
        parts.append(struct.pack("<I", cid))
        parts.append(index.matrix[row].astype("<f4").tobytes())
    p.write_bytes(b"".join(parts))

    lines = [json.dumps({"embedder": index.embedder_id, "dim": index.dim}, sort_keys=True)]
    for cid in index.chunk_ids:
        lines.append(json.dumps({"chunk_id": cid, "text": index.texts[cid]}, sort_keys=True))
    sidecar_path(p).write_text("\n".join(lines) + "\n", encoding="utf-8")


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".texts.jsonl")


def load_index(path: str | Path) -> VectorIndex:
    """Restore a persisted index; raises CorruptIndexError on bad magic/length."""
    p = Path(path)
    blob = p.read_bytes()
    if len(blob) < len(MAGIC) + 8 or blob[: len(MAGIC)] != MAGIC:
        raise CorruptIndexError(f"{p}: bad magic")
    dim, count = struct.unpack_from("<II", blob, len(MAGIC))
    entry_size = 4 + 4 * dim
    expected = len(MAGIC) + 8 + count * entry_size
    if len(blob) != expected:
        raise CorruptIndexError(f"{p}: expected {expected} bytes, got {len(blob)}")
    chunk_ids: list[int] = []
    matrix = np.zeros((count, dim), dtype=np.float32)
    offset = len(MAGIC) + 8
    for row in range(count):
        (cid,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        matrix[row] = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset)
        offset += 4 * dim
        chunk_ids.append(cid)

    side = sidecar_path(p)
    if not side.exists():
        raise CorruptIndexError(f"{p}: missing texts sidecar {side}")
    texts: dict[int, str] = {}
    embedder_id = ""
    with side.open(encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        embedder_id = header.get("embedder", "")
        for line in fh:
            if line.strip():
                entry = json.loads(line)
                texts[int(entry["chunk_id"])] = entry["text"]
    missing = [cid for cid in chunk_ids if cid not in texts]
    if missing:
        raise CorruptIndexError(f"{p}: sidecar missing texts for chunk_ids {missing[:5]}")
    return VectorIndex(
        dim=dim,
        chunk_ids=chunk_ids,
        matrix=matrix,
        texts=texts,
        embedder_id=embedder_id,
        built_at=None,
    )


def brute_force_search(
    entries: Iterable[tuple[int, Sequence[float], str]], query: Sequence[float], k: int
) -> list[RetrievalHit]:
    """Reference ranking over (chunk_id, vector, text) triples.

    Same score definition as VectorIndex.search (fsum of products,
    clipped), so results agree bit for bit; kept for callers that want a
    second opinion without building an index.
    """
    q = [float(x) for x in query]
    scored = []
    for cid, vec, text in entries:
        s = math.fsum(float(a) * b for a, b in zip(vec, q))
        s = max(-1.0, min(1.0, s))
        scored.append((cid, s, text))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return [RetrievalHit(chunk_id=c, score=s, text=t) for c, s, t in scored[:k]]
