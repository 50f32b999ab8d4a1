"""Embedders: the dense leg's text -> vector contract.

``HashingEmbedder`` is the offline default: signed feature hashing of the
tokenizer's output into a fixed number of buckets, L2-normalised. It is
deterministic across processes (blake2b, not Python's salted ``hash``).
``HttpEmbedder`` talks to an external embedding service.
"""

from __future__ import annotations

import hashlib
import os
from functools import lru_cache
from typing import Protocol

import httpx
import numpy as np

from .text import tokenize


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...

    def embed_many(self, texts: list[str]) -> np.ndarray: ...


@lru_cache(maxsize=1 << 18)
def _bucket(token: str, dim: int) -> tuple[int, float]:
    h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")
    return (h >> 1) % dim, (1.0 if h & 1 else -1.0)


# High-frequency English function words; they carry no topical signal and
# would otherwise dominate a bag-of-words hash vector.
STOPWORDS = frozenset(
    """a about above after again all am an and any are as at be because been before being below between
    both but by can could did do does doing down during each few for from further had has have having he
    her here hers him his how i if in into is it its just me more most my no nor not now of off on once
    only or other our ours out over own said same she should so some such than that the their them then
    there these they this those through time to too two under until up very was we were what when where
    which while who whom why will with would you your""".split()
)


class HashingEmbedder:
    def __init__(self, dim: int = 256, stopwords: frozenset[str] = STOPWORDS) -> None:
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.stopwords = stopwords

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in tokenize(text):
            if tok in self.stopwords:
                continue
            idx, sign = _bucket(tok, self.dim)
            vec[idx] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec /= norm
        return vec

    def embed_many(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim))
        return np.vstack([self.embed(t) for t in texts])


class EmbeddingServiceError(RuntimeError):
    pass


class HttpEmbedder:
    """Client for an embedding service: POST {"text": ...} -> {"vector": [...]}."""

    def __init__(
        self,
        url: str,
        dim: int,
        api_key: str | None = None,
        timeout: float = 30.0,
        client: httpx.Client | None = None,
    ) -> None:
        self.url = url
        self.dim = dim
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout, headers=headers)
        self._cache: dict[str, np.ndarray] = {}

    @classmethod
    def from_env(cls, dim: int = 256) -> HttpEmbedder:
        url = os.environ.get("ARPM_EMBED_URL")
        if not url:
            raise EmbeddingServiceError("ARPM_EMBED_URL is not set")
        return cls(url, dim, api_key=os.environ.get("ARPM_EMBED_KEY"))

    def embed(self, text: str) -> np.ndarray:
        # cached so repeated texts map to the same vector within one instance
        if text in self._cache:
            return self._cache[text]
        try:
            resp = self._client.post(self.url, json={"text": text})
            resp.raise_for_status()
            values = resp.json()["vector"]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise EmbeddingServiceError(f"embedding request failed: {exc}") from exc
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (self.dim,) or not np.all(np.isfinite(vec)):
            raise EmbeddingServiceError(f"expected {self.dim} finite components, got shape {vec.shape}")
        self._cache[text] = vec
        return vec

    def embed_many(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim))
        return np.vstack([self.embed(t) for t in texts])
