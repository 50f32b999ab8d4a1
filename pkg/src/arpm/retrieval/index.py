"""Immutable index snapshots for the two memory sources.

Knowledge children and experience chunks are indexed separately and never
share a structure. Adding chunks returns a new snapshot; existing snapshots
stay valid for readers holding them.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Sequence

import numpy as np

from ..config import BM25Params
from ..records import MemoryChunk, SourceType
from .embedding import Embedder
from .scoring import SCORE_DECIMALS, DocStats, bm25_idf, query_terms, rank_key
from .text import tokenize


def experience_embedding_text(chunk: MemoryChunk) -> str:
    """Tag a chat chunk with its speaker, in the query's role-prefix notation.

    Only the speaker's tag is added, so the shared prefix alone cannot lift
    a contentless line ("Noted.") over the similarity threshold.
    """
    if chunk.source_label == "chat:assistant":
        return f"[Assistant {chunk.character_id}] {chunk.text}"
    return f"[User {chunk.user_id}] {chunk.text}"


def _normalize_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    return np.divide(mat, norms, out=np.zeros_like(mat), where=norms > 0)


def top_ranked(ids: Sequence[str], scores: np.ndarray, limit: int, mask: np.ndarray | None = None) -> list[int]:
    """Indices of the ``limit`` best entries under :func:`rank_key` order."""
    idx = np.arange(len(ids)) if mask is None else np.nonzero(mask)[0]
    if limit <= 0 or idx.size == 0:
        return []
    if idx.size > limit:
        sub = -np.round(scores[idx], SCORE_DECIMALS)
        kth = np.partition(sub, limit - 1)[limit - 1]
        # widened by a few quanta so numpy/python rounding differences cannot drop a tie
        idx = idx[sub <= kth + 10.0 ** (1 - SCORE_DECIMALS)]
    ordered = sorted(idx.tolist(), key=lambda i: rank_key(float(scores[i]), ids[i]))
    return ordered[:limit]


class KnowledgeIndex:
    """BM25 inverted index plus dense matrix over knowledge child chunks."""

    def __init__(self, children: Sequence[MemoryChunk], vectors: np.ndarray, dim: int) -> None:
        for c in children:
            if c.source_type is not SourceType.KNOWLEDGE_CHILD:
                raise ValueError(f"{c.chunk_id} is not a knowledge child")
        self.children = tuple(children)
        self.ids = [c.chunk_id for c in self.children]
        self.dim = dim
        self.vectors = vectors.reshape(len(self.children), dim)
        self.vectors.setflags(write=False)
        tokens = [tokenize(c.text) for c in self.children]
        self.doc_len = np.array([len(t) for t in tokens], dtype=np.float64)
        self.n_docs = len(self.children)
        self.avgdl = float(self.doc_len.sum()) / self.n_docs if self.n_docs else 0.0
        self._tf = [Counter(t) for t in tokens]
        postings: dict[str, tuple[list[int], list[int]]] = {}
        for i, counts in enumerate(self._tf):
            for term, tf in counts.items():
                docs, tfs = postings.setdefault(term, ([], []))
                docs.append(i)
                tfs.append(tf)
        self._postings = {
            t: (np.array(d, dtype=np.int64), np.array(f, dtype=np.float64)) for t, (d, f) in postings.items()
        }

    @classmethod
    def build(cls, children: Sequence[MemoryChunk], embedder: Embedder) -> KnowledgeIndex:
        vecs = embedder.embed_many([c.text for c in children]) if children else np.zeros((0, embedder.dim))
        return cls(children, vecs, embedder.dim)

    def extended(self, new_children: Sequence[MemoryChunk], embedder: Embedder) -> KnowledgeIndex:
        if not new_children:
            return self
        vecs = embedder.embed_many([c.text for c in new_children])
        return KnowledgeIndex(
            list(self.children) + list(new_children),
            np.vstack([self.vectors, vecs]),
            self.dim,
        )

    def __len__(self) -> int:
        return self.n_docs

    def df(self, term: str) -> int:
        p = self._postings.get(term)
        return 0 if p is None else int(p[0].size)

    def doc_stats(self, chunk_id: str) -> DocStats:
        try:
            i = self.ids.index(chunk_id)
        except ValueError:
            raise KeyError(f"{chunk_id} is not indexed") from None
        tf = self._tf[i]
        return DocStats(tf=tf, length=int(self.doc_len[i]), n_docs=self.n_docs, avgdl=self.avgdl,
                        df={t: self.df(t) for t in tf})

    def bm25_scores(self, q_tokens: Sequence[str], params: BM25Params) -> np.ndarray:
        scores = np.zeros(self.n_docs, dtype=np.float64)
        if not self.n_docs:
            return scores
        k1, b = params.k1, params.b
        for t in query_terms(q_tokens):
            p = self._postings.get(t)
            if p is None:
                continue
            docs, tf = p
            idf = bm25_idf(int(docs.size), self.n_docs, params.delta)
            dl = self.doc_len[docs]
            scores[docs] += idf * (tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / self.avgdl)))
        return scores

    def vector_scores(self, qvec: np.ndarray) -> np.ndarray:
        if qvec.shape != (self.dim,):
            raise ValueError(f"query dimension {qvec.shape} does not match index dimension {self.dim}")
        return self.vectors @ qvec


class ExperienceIndex:
    """Dense matrix over experience chunks (role-prefixed embeddings)."""

    def __init__(self, chunks: Sequence[MemoryChunk], vectors: np.ndarray, dim: int) -> None:
        for c in chunks:
            if c.source_type is not SourceType.EXPERIENCE:
                raise ValueError(f"{c.chunk_id} is not an experience chunk")
        self.chunks = tuple(chunks)
        self.ids = [c.chunk_id for c in self.chunks]
        self.dim = dim
        self.vectors = _normalize_rows(vectors.reshape(len(self.chunks), dim))
        self.vectors.setflags(write=False)

    @classmethod
    def build(cls, chunks: Sequence[MemoryChunk], embedder: Embedder) -> ExperienceIndex:
        vecs = (
            embedder.embed_many([experience_embedding_text(c) for c in chunks])
            if chunks
            else np.zeros((0, embedder.dim))
        )
        return cls(chunks, vecs, embedder.dim)

    def extended(self, new_chunks: Sequence[MemoryChunk], embedder: Embedder) -> ExperienceIndex:
        if not new_chunks:
            return self
        vecs = embedder.embed_many([experience_embedding_text(c) for c in new_chunks])
        return ExperienceIndex(list(self.chunks) + list(new_chunks), np.vstack([self.vectors, vecs]), self.dim)

    def __len__(self) -> int:
        return len(self.chunks)

    def cosine_scores(self, qvec: np.ndarray) -> np.ndarray:
        if qvec.shape != (self.dim,):
            raise ValueError(f"query dimension {qvec.shape} does not match index dimension {self.dim}")
        n = float(np.linalg.norm(qvec))
        if n == 0.0 or not self.chunks:
            return np.zeros(len(self.chunks))
        return np.clip(self.vectors @ (qvec / n), 0.0, 1.0)

