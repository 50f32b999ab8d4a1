"""Scoring formulas for both retrieval routes.

Knowledge route: inner-product vector score, BM25+ keyword score, reciprocal
rank fusion, then min-max normalised RRF plus role/source bonuses.
Experience route: clipped cosine plus session/role bonuses.
"""

from __future__ import annotations

import math
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from ..config import BM25Params, BonusConfig, FusionParams

# Scores are compared at this resolution so that last-ulp differences between
# equivalent computations (BLAS vs scalar sums) cannot flip an ordering.
SCORE_DECIMALS = 10

_PREFIX = re.compile(r"^\[User [^\]]*\]\[Assistant [^\]]*\] ")


class AugmentationError(ValueError):
    pass


def augment_query(q: str, user_id: str, assistant_id: str) -> str:
    if not q:
        raise AugmentationError("query must be nonempty")
    if _PREFIX.match(q):
        raise AugmentationError("query already carries a role prefix")
    return f"[User {user_id}][Assistant {assistant_id}] {q}"


def strip_augmentation(q: str) -> str:
    return _PREFIX.sub("", q, count=1)


def rank_key(score: float, chunk_id: str) -> tuple[float, str]:
    """Sort key: descending score, then ascending chunk_id."""
    return (-round(score, SCORE_DECIMALS), chunk_id)


def score_vector(q: np.ndarray, d: np.ndarray) -> float:
    q = np.asarray(q, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if q.shape != d.shape:
        raise ValueError(f"dimension mismatch: {q.shape} vs {d.shape}")
    return float(np.dot(q, d))


def bm25_idf(df: int, n_docs: int, delta: float) -> float:
    if not 0 <= df <= n_docs or n_docs < 1:
        raise ValueError(f"invalid df={df} for N={n_docs}")
    return max(0.0, math.log((n_docs - df + 0.5) / (df + 0.5))) + delta


def bm25_term(tf: float, doc_len: float, avgdl: float, idf: float, params: BM25Params) -> float:
    if tf <= 0:
        return 0.0
    k1, b = params.k1, params.b
    return idf * (tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc_len / avgdl)))


@dataclass(frozen=True)
class DocStats:
    """Per-document term frequencies and length, plus the corpus-level counts."""

    tf: Mapping[str, int]
    length: int
    n_docs: int
    avgdl: float
    df: Mapping[str, int]


def query_terms(tokens: Iterable[str]) -> list[str]:
    """Distinct query terms in first-appearance order."""
    return list(dict.fromkeys(tokens))


def score_bm25(query_tokens: Sequence[str], doc: DocStats | None, params: BM25Params) -> float:
    if doc is None:
        raise KeyError("document is not indexed")
    total = 0.0
    for t in query_terms(query_tokens):
        tf = doc.tf.get(t, 0)
        if tf == 0:
            continue
        total += bm25_term(tf, doc.length, doc.avgdl, bm25_idf(doc.df[t], doc.n_docs, params.delta), params)
    return total


def fuse_rrf(ranked_lists: Sequence[Sequence[str]], params: FusionParams = FusionParams()) -> dict[str, float]:
    """Reciprocal rank fusion with 0-based ranks: top of a list adds 1/(k+1)."""
    if not ranked_lists:
        raise ValueError("need at least one ranked list")
    fused: dict[str, float] = {}
    for lst in ranked_lists:
        if len(set(lst)) != len(lst):
            raise ValueError("duplicate id within one ranked list")
        for rank, doc_id in enumerate(lst):
            fused[doc_id] = fused.get(doc_id, 0.0) + 1.0 / (params.k_rrf + rank + 1.0)
    return fused


def min_max_normalize(scores: Mapping[str, float]) -> dict[str, float]:
    """Min-max to [0, 1]; a singleton or all-equal pool maps to 1.0."""
    if not scores:
        return {}
    lo, hi = min(scores.values()), max(scores.values())
    if hi - lo <= 0:
        return {k: 1.0 for k in scores}
    span = hi - lo
    return {k: (v - lo) / span for k, v in scores.items()}


@dataclass(frozen=True)
class QueryContext:
    """Who is asking, used for bonus matching."""

    user_id: str = ""
    character_id: str = ""
    session_id: str = ""


def knowledge_bonus(
    chunk_user: str,
    chunk_character: str,
    source_label: str,
    ctx: QueryContext,
    bonuses: BonusConfig,
    trusted_sources: Iterable[str] = (),
) -> float:
    bonus = 0.0
    if ctx.user_id and chunk_user == ctx.user_id:
        bonus += bonuses.b_user
    if ctx.character_id and chunk_character == ctx.character_id:
        bonus += bonuses.b_character
    if source_label and source_label in set(trusted_sources):
        bonus += bonuses.b_source
    return bonus


def knowledge_base_scores(rrf: Mapping[str, float], bonus: Mapping[str, float]) -> dict[str, float]:
    """Normalised RRF over the pool plus each candidate's bonus."""
    norm = min_max_normalize(rrf)
    return {k: v + bonus.get(k, 0.0) for k, v in norm.items()}


def semantic_score(q: np.ndarray, d: np.ndarray) -> float:
    """clip(cos(q, d), 0, 1); zero vectors score 0."""
    q = np.asarray(q, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    nq, nd = float(np.linalg.norm(q)), float(np.linalg.norm(d))
    if nq == 0.0 or nd == 0.0:
        return 0.0
    return min(1.0, max(0.0, float(np.dot(q, d)) / (nq * nd)))


def chat_bonus(
    chunk_session: str,
    chunk_user: str,
    chunk_character: str,
    ctx: QueryContext,
    bonuses: BonusConfig,
) -> float:
    bonus = 0.0
    if ctx.session_id and chunk_session == ctx.session_id:
        bonus += bonuses.b_session
    if ctx.user_id and chunk_user == ctx.user_id:
        bonus += bonuses.b_user
    if ctx.character_id and chunk_character == ctx.character_id:
        bonus += bonuses.b_character
    return bonus


def chat_base_score(s_sem: float, bonus: float) -> float:
    return s_sem + bonus
