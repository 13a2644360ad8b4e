"""Text embedders behind one small contract.

``embed(text)`` returns a float64 vector that is either all-zero (empty
or whitespace-only input) or L2-normalized. The default backend is a
fully offline signed feature hasher so the whole pipeline stays
deterministic; an HTTP embedder implementing the same contract can be
swapped in for a real transformer model.
"""

from __future__ import annotations

import hashlib
import os
import re

import numpy as np

from .errors import BackendUnavailableError

DEFAULT_DIM = 256

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class HashingEmbedder:
    """Deterministic bag-of-words embedder via signed feature hashing.

    Lowercase alphanumeric tokens are hashed (md5, stable across runs and
    platforms) into ``dim`` buckets with a +/-1 sign, then the count vector
    is L2-normalized. Word order never changes the result.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.id = f"hashing-{dim}"

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token in _TOKEN_RE.findall(text.lower()):
            digest = hashlib.md5(token.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "little") % self.dim
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[bucket] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            return vec
        return vec / norm


class HttpEmbedder:
    """Embeddings endpoint client (chat-completions style API).

    POSTs ``{"model", "input"}`` to ``<base_url>/embeddings`` with a bearer
    token taken from ``api_key_env``. Returned vectors are re-normalized to
    satisfy the unit-norm contract.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        dim: int,
        api_key_env: str = "LLM_API_KEY",
        timeout_s: float = 30.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dim = dim
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.id = f"http-{model}-{dim}"

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            return np.zeros(self.dim, dtype=np.float64)
        import httpx  # deferred: keep worker startup light

        headers = {}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = httpx.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": text},
                headers=headers,
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
            values = resp.json()["data"][0]["embedding"]
        except Exception as exc:
            raise BackendUnavailableError(f"embedding backend failed: {exc}") from exc
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise BackendUnavailableError(
                f"embedding backend returned dim {vec.shape}, expected ({self.dim},)"
            )
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            return vec
        return vec / norm
