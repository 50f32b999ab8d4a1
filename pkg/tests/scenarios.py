"""Random retrieval scenarios shared by the oracle-equivalence tests."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

import oracle
from conftest import T0, make_engine

from arpm.config import EngineConfig
from arpm.memory_store import DocumentMeta
from arpm.orchestrator import EvidenceGroundedMock
from arpm.records import TurnRecord

VOCAB = [f"w{i}" for i in range(40)] + ["harbour", "ferry", "locker", "market", "garden", "copper", "lantern", "violet"]
USERS = ["alice", "bob", ""]
CHARACTERS = ["mori", "kato", ""]
LABELS = ["manual", "wiki", ""]

TOGGLE_SETS = [
    {},
    {"enable_bm25": False},
    {"enable_temporal": False},
    {"enable_chat_retrieval": False},
    {"pure_dialogue": True},
]


def sentence(rng: random.Random, lo: int = 3, hi: int = 14) -> str:
    return " ".join(rng.choice(VOCAB) for _ in range(rng.randint(lo, hi)))


@dataclass
class Scenario:
    engine: object
    session: object
    queries: list[tuple[str, int, float]]


def build(seed: int, config: EngineConfig, n_docs: int = 12, n_turns: int = 20, n_queries: int = 10) -> Scenario:
    rng = random.Random(seed)
    cfg = replace(config, parent_size=120, child_size=40, similarity_threshold=rng.choice([0.0, 0.2, 0.5]))
    eng = make_engine(config=cfg)
    docs = []
    for i in range(n_docs):
        text = " ".join(sentence(rng) for _ in range(rng.randint(1, 4)))
        meta = DocumentMeta(
            doc_id=f"d{i:03d}",
            source_label=rng.choice(LABELS),
            user_id=rng.choice(USERS),
            character_id=rng.choice(CHARACTERS),
            timestamp=T0 + rng.uniform(-500, 500) * 3600,
            round=rng.randint(0, 30),
        )
        docs.append((text, meta))
    eng.store.ingest_many(docs, cfg.parent_size, cfg.child_size)
    session = eng.open_session("s-main", EvidenceGroundedMock("mock-a"), user_id="alice", character_id="mori")
    # turns from the querying session and one other
    rounds = {"s-main": 0, "s-other": 0}
    for _ in range(n_turns):
        sid = rng.choice(list(rounds))
        rounds[sid] += 1
        r = rounds[sid]
        eng.store.append_turn(
            TurnRecord(
                chunk_id=f"turn:{sid}:{r:06d}",
                session_id=sid,
                round=r,
                user_input=sentence(rng),
                assistant_reply=sentence(rng) if rng.random() < 0.8 else "",
                timestamp=T0 + r * 3600 * rng.uniform(0.5, 30),
                user_id="alice" if sid == "s-main" else rng.choice(USERS[:2]),
                character_id=rng.choice(CHARACTERS[:2]),
                model_label="mock-a",
            )
        )
    queries = [
        (sentence(rng, 1, 6), rounds["s-main"] + rng.randint(1, 40), T0 + rng.uniform(0, 2000) * 3600) for _ in range(n_queries)
    ]
    return Scenario(eng, session, queries)


def compare(sc: Scenario) -> list[str]:
    """Run each query through engine and oracle; return a list of mismatch descriptions."""
    eng, session = sc.engine, sc.session
    cfg = eng.config
    embed = eng.store.embedder.embed
    problems = []
    for q, r, now in sc.queries:
        res = eng.retrieve(session, q, r, now)
        aug = res.augmented_query
        want_k = oracle.knowledge_topk(
            aug, eng.store.knowledge_children, eng.store.parents, embed, cfg, "alice", "mori", r, now
        )
        want_e = oracle.experience_topk(
            aug, eng.store.experience_chunks, embed, cfg, "alice", "mori", session.session_id, r, now
        )
        got_k = [c for c in res.merged if c.route == "knowledge"]
        got_e = [c for c in res.merged if c.route == "experience"]
        for route, got, want in (("knowledge", got_k, want_k), ("experience", got_e, want_e)):
            if [c.key for c in got] != [h.key for h in want]:
                problems.append(f"{route} order differs for {q!r}: {[c.key for c in got]} vs {[h.key for h in want]}")
                continue
            for c, h in zip(got, want):
                if abs(c.final_score - h.score) > 1e-9:
                    problems.append(f"{route} score differs for {c.key}: {c.final_score} vs {h.score}")
    return problems
