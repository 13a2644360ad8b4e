"""Tests for the hashing embedder and the exact flat vector index."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest

from gridscribe.corpus import RAW_TEXT, DocumentChunk
from gridscribe.embedding import HashingEmbedder
from gridscribe.errors import CorruptIndexError, DimMismatchError
from gridscribe.vectorstore import (
    brute_force_search,
    build_index,
    load_index,
    persist_index,
    sidecar_path,
)


def chunk(cid: int, text: str) -> DocumentChunk:
    return DocumentChunk(chunk_id=cid, source_id="s", start=0, end=len(text), text=text)


@pytest.fixture(scope="module")
def embedder() -> HashingEmbedder:
    return HashingEmbedder()


class TestHashingEmbedder:
    def test_empty_text_zero_vector(self, embedder):
        vec = embedder.embed("")
        assert vec.shape == (256,)
        assert not vec.any()
        assert not embedder.embed("   \n\t").any()

    def test_deterministic(self, embedder):
        a = embedder.embed("power flow")
        b = embedder.embed("power flow")
        assert np.array_equal(a, b)

    def test_unit_norm(self, embedder):
        for text in ("runpf", "run a dc power flow on case14", "a b c d e f g"):
            assert abs(float(np.linalg.norm(embedder.embed(text))) - 1.0) < 1e-6

    def test_bag_of_words_order_invariance(self, embedder):
        a = embedder.embed("run power flow").astype(np.float64)
        b = embedder.embed("power flow run").astype(np.float64)
        assert abs(float(a @ b) - 1.0) < 1e-9

    def test_case_insensitive_tokens(self, embedder):
        assert np.array_equal(embedder.embed("RunPF"), embedder.embed("runpf"))


class TestBuildIndex:
    def test_three_chunks(self, embedder):
        chunks = [chunk(0, "alpha"), chunk(1, "bravo"), chunk(2, "charlie")]
        index = build_index(chunks, embedder)
        assert len(index) == 3
        assert index.dim == embedder.dim
        assert index.chunk_ids == [0, 1, 2]
        assert index.embedder_id == embedder.id
        assert index.built_at is not None

    def test_empty_chunk_list(self, embedder):
        index = build_index([], embedder)
        assert len(index) == 0
        assert index.search(embedder.embed("anything"), k=3) == []

    def test_rebuild_persists_byte_identical(self, embedder, tmp_path):
        chunks = [chunk(0, "alpha beta"), chunk(1, "gamma")]
        persist_index(build_index(chunks, embedder), tmp_path / "a.gsix")
        persist_index(build_index(chunks, embedder), tmp_path / "b.gsix")
        assert (tmp_path / "a.gsix").read_bytes() == (tmp_path / "b.gsix").read_bytes()
        assert sidecar_path(tmp_path / "a.gsix").read_bytes() == sidecar_path(
            tmp_path / "b.gsix"
        ).read_bytes()


class TestSearch:
    def test_self_similarity(self, embedder):
        chunks = [chunk(0, "voltage magnitude"), chunk(1, "branch flow limit"), chunk(2, "dc power flow")]
        index = build_index(chunks, embedder)
        hits = index.search(embedder.embed("dc power flow"), k=1)
        assert hits[0].chunk_id == 2
        assert abs(hits[0].score - 1.0) < 1e-6
        assert hits[0].text == "dc power flow"

    def test_k_clamped_to_entries(self, embedder):
        index = build_index([chunk(i, f"text {i}") for i in range(3)], embedder)
        assert len(index.search(embedder.embed("text"), k=10)) == 3

    def test_identical_texts_tie_broken_by_chunk_id(self, embedder):
        index = build_index(
            [chunk(5, "same words"), chunk(2, "same words"), chunk(9, "other")], embedder
        )
        hits = index.search(embedder.embed("same words"), k=3)
        assert hits[0].chunk_id == 2
        assert hits[1].chunk_id == 5
        assert hits[0].score == hits[1].score

    def test_zero_query_scores_zero(self, embedder):
        index = build_index([chunk(0, "alpha")], embedder)
        hits = index.search(np.zeros(256, dtype=np.float32), k=1)
        assert hits[0].score == 0.0

    def test_dim_mismatch(self, embedder):
        index = build_index([chunk(0, "alpha")], embedder)
        with pytest.raises(DimMismatchError):
            index.search(np.zeros(8, dtype=np.float32), k=1)

    def test_invalid_k(self, embedder):
        index = build_index([chunk(0, "alpha")], embedder)
        with pytest.raises(ValueError):
            index.search(embedder.embed("alpha"), k=0)

    def test_matches_brute_force_on_random_corpus(self, embedder):
        rng = random.Random(7)
        vocab = "runpf rundcpf runopf bus gen branch voltage flow limit case options".split()
        chunks = [
            chunk(i, " ".join(rng.choices(vocab, k=rng.randint(1, 8)))) for i in range(50)
        ]
        index = build_index(chunks, embedder)
        # reference ranking over the index's own entries
        entries = [
            (cid, [float(x) for x in index.matrix[row]], index.texts[cid])
            for row, cid in enumerate(index.chunk_ids)
        ]
        for _ in range(10):
            query = embedder.embed(" ".join(rng.choices(vocab, k=3)))
            got = index.search(query, k=10)
            expected = brute_force_search(entries, [float(x) for x in query], k=10)
            assert [h.chunk_id for h in got] == [h.chunk_id for h in expected]
            for g, e in zip(got, expected):
                assert abs(g.score - e.score) < 1e-9

    def test_scores_bounded_and_sorted(self, embedder):
        index = build_index([chunk(i, f"word{i} shared") for i in range(20)], embedder)
        hits = index.search(embedder.embed("shared word3"), k=20)
        scores = [h.score for h in hits]
        assert scores == sorted(scores, reverse=True)
        assert all(abs(s) <= 1.0 + 1e-9 for s in scores)


class TestPersistence:
    def test_round_trip_search_identical(self, embedder, tmp_path):
        chunks = [chunk(i, f"fragment number {i} about power") for i in range(3)]
        index = build_index(chunks, embedder)
        path = tmp_path / "idx.gsix"
        persist_index(index, path)
        loaded = load_index(path)
        assert loaded.embedder_id == embedder.id
        rng = random.Random(3)
        for _ in range(5):
            query = embedder.embed(" ".join(rng.choices(["power", "fragment", "case", "x"], k=4)))
            assert index.search(query, k=3) == loaded.search(query, k=3)

    def test_truncated_file_corrupt(self, embedder, tmp_path):
        path = tmp_path / "idx.gsix"
        persist_index(build_index([chunk(0, "alpha")], embedder), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-7])
        with pytest.raises(CorruptIndexError):
            load_index(path)

    def test_bad_magic_corrupt(self, tmp_path):
        path = tmp_path / "idx.gsix"
        path.write_bytes(b"NOTGS" + b"\x00" * 16)
        with pytest.raises(CorruptIndexError):
            load_index(path)

    def test_missing_sidecar_corrupt(self, embedder, tmp_path):
        path = tmp_path / "idx.gsix"
        persist_index(build_index([chunk(0, "alpha")], embedder), path)
        sidecar_path(path).unlink()
        with pytest.raises(CorruptIndexError):
            load_index(path)

    def test_empty_index_round_trip(self, embedder, tmp_path):
        path = tmp_path / "empty.gsix"
        persist_index(build_index([], embedder), path)
        loaded = load_index(path)
        assert len(loaded) == 0
        assert loaded.search(embedder.embed("q"), k=2) == []


def test_brute_force_oracle_on_handmade_vectors():
    # sanity-check the reference itself on vectors with known cosines
    entries = [
        (0, [1.0, 0.0], "east"),
        (1, [0.0, 1.0], "north"),
        (2, [math.sqrt(0.5), math.sqrt(0.5)], "northeast"),
    ]
    hits = brute_force_search(entries, [1.0, 0.0], k=3)
    assert [h.chunk_id for h in hits] == [0, 2, 1]
    assert abs(hits[1].score - math.sqrt(0.5)) < 1e-12
