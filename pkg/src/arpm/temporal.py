"""Dual-temporal retention weights and per-route reranking.

Each memory chunk has two clocks: the dialogue round it was written in and
its physical timestamp. The retention weight is the product of an
exponential decay in round distance and one in elapsed hours.
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass

from .config import TemporalDecayParams
from .records import ScoredCandidate
from .retrieval.scoring import rank_key


@dataclass(frozen=True)
class TemporalContext:
    r_current: int
    now: float


def round_decay(r_current: int, r_d: int, lambda_round: float) -> float:
    return math.exp(-abs(r_current - r_d) / lambda_round)


def clock_decay(delta_hours: float, lambda_hours: float) -> float:
    # future-stamped chunks (clock skew) never get boosted above 1
    return math.exp(-max(0.0, delta_hours) / lambda_hours)


def temporal_weight(w_round: float, w_clock: float) -> float:
    return w_round * w_clock


def retention_weight(r_d: int, timestamp: float, params: TemporalDecayParams, ctx: TemporalContext) -> float:
    delta_hours = (ctx.now - timestamp) / 3600.0
    return temporal_weight(
        round_decay(ctx.r_current, r_d, params.lambda_round),
        clock_decay(delta_hours, params.lambda_hours),
    )


def rerank_route(
    candidates: Iterable[ScoredCandidate],
    params: TemporalDecayParams,
    ctx: TemporalContext,
    enable_temporal: bool = True,
) -> list[ScoredCandidate]:
    """Set temporal_weight and final_score on each candidate and re-sort.

    Mutates the candidates in place; with ``enable_temporal=False`` every
    weight is 1 and the order is the base-score order.
    """
    out = []
    for c in candidates:
        c.temporal_weight = retention_weight(c.round, c.timestamp, params, ctx) if enable_temporal else 1.0
        c.final_score = c.base_score * c.temporal_weight
        out.append(c)
    out.sort(key=lambda c: rank_key(c.final_score, c.chunk_id))
    return out
