"""The knowledge route (hybrid) and the experience route (semantic)."""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from ..config import EngineConfig
from ..records import MemoryChunk, ScoredCandidate
from .embedding import Embedder
from .index import ExperienceIndex, KnowledgeIndex, top_ranked
from .scoring import (
    QueryContext,
    chat_base_score,
    chat_bonus,
    fuse_rrf,
    knowledge_base_scores,
    knowledge_bonus,
    rank_key,
)
from .text import tokenize


def retrieve_knowledge(
    query: str,
    k: int,
    index: KnowledgeIndex,
    parents: Mapping[str, MemoryChunk],
    embedder: Embedder,
    config: EngineConfig,
    ctx: QueryContext = QueryContext(),
) -> list[ScoredCandidate]:
    """Top-k parent-level hits by base score (before temporal reranking).

    The vector leg ranks every child by inner product; the BM25 leg ranks
    children with a positive keyword score. Both are cut to the RRF pool
    size, fused, min-max normalised over the pool, and given bonuses.
    Children resolve to their parent; each parent keeps its best child.
    """
    if k <= 0 or len(index) == 0:
        return []
    pool = config.rrf_pool_size
    vec = index.vector_scores(embedder.embed(query))
    vec_top = top_ranked(index.ids, vec, pool)
    lists = [[index.ids[i] for i in vec_top]]
    bm = np.zeros(len(index))
    if config.enable_bm25:
        bm = index.bm25_scores(tokenize(query), config.bm25)
        bm_top = top_ranked(index.ids, bm, pool, mask=bm > 0)
        lists.append([index.ids[i] for i in bm_top])
    rrf = fuse_rrf(lists, config.fusion)

    pos = {cid: i for i, cid in enumerate(index.ids) if cid in rrf}
    bonus = {}
    for cid, i in pos.items():
        ch = index.children[i]
        bonus[cid] = knowledge_bonus(
            ch.user_id, ch.character_id, ch.source_label, ctx, config.bonuses, config.trusted_sources
        )
    base = knowledge_base_scores(rrf, bonus)

    best: dict[str, ScoredCandidate] = {}
    for cid in sorted(base, key=lambda c: rank_key(base[c], c)):
        ch = index.children[pos[cid]]
        if ch.parent_id in best:
            continue
        parent = parents[ch.parent_id]
        best[ch.parent_id] = ScoredCandidate(
            chunk_id=cid,
            parent_id=ch.parent_id,
            route="knowledge",
            text=parent.text,
            timestamp=parent.timestamp,
            round=parent.round,
            source_label=parent.source_label,
            s_vec=float(vec[pos[cid]]),
            s_bm25=float(bm[pos[cid]]),
            s_rrf=rrf[cid],
            base_score=base[cid],
            final_score=base[cid],
        )
        if len(best) == k:
            break
    return list(best.values())


def retrieve_experience(
    query: str,
    k: int,
    index: ExperienceIndex,
    embedder: Embedder,
    config: EngineConfig,
    ctx: QueryContext = QueryContext(),
) -> list[ScoredCandidate]:
    """Top-k experience chunks by clipped cosine plus bonuses.

    Chunks whose cosine falls below ``similarity_threshold`` are dropped
    before scoring.
    """
    if k <= 0 or len(index) == 0:
        return []
    sem = index.cosine_scores(embedder.embed(query))
    keep = np.nonzero(sem >= config.similarity_threshold)[0]
    base = np.zeros(len(index))
    for i in keep:
        ch = index.chunks[i]
        base[i] = chat_base_score(
            float(sem[i]), chat_bonus(ch.session_id, ch.user_id, ch.character_id, ctx, config.bonuses)
        )
    mask = np.zeros(len(index), dtype=bool)
    mask[keep] = True
    out = []
    for i in top_ranked(index.ids, base, k, mask=mask):
        ch = index.chunks[i]
        out.append(
            ScoredCandidate(
                chunk_id=ch.chunk_id,
                route="experience",
                text=ch.text,
                timestamp=ch.timestamp,
                round=ch.round,
                source_label=ch.source_label,
                s_sem=float(sem[i]),
                base_score=float(base[i]),
                final_score=float(base[i]),
            )
        )
    return out
