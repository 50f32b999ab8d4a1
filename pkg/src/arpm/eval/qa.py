"""Scripted question answering over a knowledge corpus, judged by the automatic rule.

A round is auto-correct when the gold chunk is the top-ranked candidate of
its route in the prompt and the reply contains the gold answer verbatim.
"""

from __future__ import annotations

import re
from collections.abc import Sequence

from ..orchestrator.clients import EvidenceGroundedMock
from ..orchestrator.engine import Engine
from ..records import ScoredCandidate, TurnRecord
from ..retrieval.scoring import rank_key
from .corpus import QAItem
from .metrics import EvalRecord


class ScriptError(ValueError):
    pass


def check_script(engine: Engine, questions: Sequence[QAItem]) -> None:
    """Reject scripts whose rounds are not 1..n or whose gold chunks are not stored."""
    if not questions:
        raise ScriptError("question script is empty")
    rounds = [q.round for q in questions]
    if rounds != list(range(1, len(questions) + 1)):
        raise ScriptError("question rounds must run 1..n in order")
    parents = engine.store.parents
    missing = [q.gold_chunk_id for q in questions if q.gold_chunk_id not in parents]
    if missing:
        raise ScriptError(f"{len(missing)} gold chunk(s) not in the knowledge store, e.g. {missing[0]}")


def answer_key(questions: Sequence[QAItem]) -> list[tuple[str, str]]:
    return [(rf"^{re.escape(q.question)}$", q.gold_answer) for q in questions]


def top_candidate(candidates: Sequence[ScoredCandidate], route: str) -> ScoredCandidate | None:
    pool = [c for c in candidates if c.route == route]
    return min(pool, key=lambda c: rank_key(c.final_score, c.chunk_id)) if pool else None


def judge(turn: TurnRecord, q: QAItem) -> EvalRecord:
    route = "knowledge" if q.gold_chunk_id.startswith("kb:") else "experience"
    top = top_candidate(turn.candidates, route)
    top_id = top.key if top else None
    in_prompt = any(c.key == q.gold_chunk_id for c in turn.candidates)
    hit = q.gold_answer in turn.assistant_reply
    return EvalRecord(
        round=q.round,
        question=q.question,
        gold_chunk_id=q.gold_chunk_id,
        gold_answer=q.gold_answer,
        response=turn.assistant_reply,
        top1_chunk_id=top_id,
        evidence_in_prompt=in_prompt,
        auto_correct=int(top_id == q.gold_chunk_id and hit),
        excluded=turn.compliance.external_anomaly is not None,
    )


def run_qa(engine: Engine, session_id: str, questions: Sequence[QAItem]) -> tuple[list[EvalRecord], list[TurnRecord]]:
    """Ask every scripted question in order within one session.

    The session must already be open. If its client is an
    ``EvidenceGroundedMock``, the script's answers are added to its key.
    """
    check_script(engine, questions)
    session = engine.session(session_id)
    if isinstance(session.client, EvidenceGroundedMock):
        session.client.add_answers(answer_key(questions))
    records, turns = [], []
    for q in questions:
        turn = engine.run_turn(session_id, q.question)
        turns.append(turn)
        records.append(judge(turn, q))
    return records, turns
