"""Per-turn pipeline: augment, retrieve, rerank, assemble, generate, repair, write back."""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..clock import Clock, WallClock
from ..config import EngineConfig
from ..evidence import (
    DEFAULT_TEMPLATE,
    STRONG_TEMPLATE,
    BuiltPrompt,
    build_prompt,
    merge_routes,
    unfold_chronologically,
)
from ..memory_store import DocumentMeta, MemoryStore
from ..records import ComplianceReport, MemoryChunk, ScoredCandidate, TurnRecord
from ..retrieval.embedding import Embedder, HashingEmbedder
from ..retrieval.routes import retrieve_experience, retrieve_knowledge
from ..retrieval.scoring import QueryContext, augment_query
from ..temporal import TemporalContext, rerank_route
from .clients import ModelClient, ModelError, ModelTimeout
from .protocol import repair_loop

logger = logging.getLogger(__name__)

DEFAULT_PERSONA = "You are a long-term dialogue assistant. Ground every factual claim in the evidence below."


class SessionError(RuntimeError):
    pass


@dataclass
class Session:
    session_id: str
    user_id: str
    character_id: str
    client: ModelClient
    persona: str = DEFAULT_PERSONA
    # first round whose turns may appear in the in-window dialogue history
    window_start: int = 1
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


@dataclass
class RetrievalResult:
    augmented_query: str
    knowledge: list[ScoredCandidate]
    experience: list[ScoredCandidate]
    merged: list[ScoredCandidate]


class Engine:
    def __init__(self, store: MemoryStore, config: EngineConfig | None = None, clock: Clock | None = None) -> None:
        self.store = store
        self.config = config or EngineConfig()
        self.clock = clock or WallClock()
        self.sessions: dict[str, Session] = {}
        self._sessions_lock = threading.Lock()

    @classmethod
    def open(
        cls,
        root: str | Path | None,
        config: EngineConfig | None = None,
        embedder: Embedder | None = None,
        clock: Clock | None = None,
        fsync: bool = True,
    ) -> Engine:
        config = config or EngineConfig()
        embedder = embedder or HashingEmbedder(config.embedding_dim)
        return cls(MemoryStore(root, embedder, fsync=fsync), config, clock)

    # ---- knowledge -----------------------------------------------------------

    def ingest(self, doc_text: str, meta: DocumentMeta | None = None) -> list[MemoryChunk]:
        return self.ingest_many([(doc_text, meta or DocumentMeta())])

    def ingest_many(self, docs: list[tuple[str, DocumentMeta]]) -> list[MemoryChunk]:
        cfg = self.config
        return self.store.ingest_many(docs, cfg.parent_size, cfg.child_size, cfg.chunk_overlap, timestamp=self.clock())

    # ---- sessions ------------------------------------------------------------

    def open_session(
        self,
        session_id: str,
        client: ModelClient,
        user_id: str = "user",
        character_id: str = "assistant",
        persona: str = DEFAULT_PERSONA,
    ) -> Session:
        """Open a new session or resume one found in the store."""
        with self._sessions_lock:
            if session_id in self.sessions:
                raise SessionError(f"session {session_id} already open")
            events = self.store.load_events(session_id)
            opened = next((e for e in events if e.get("event") == "session_open"), None)
            if opened is not None:
                user_id, character_id = opened["user_id"], opened["character_id"]
                persona = opened.get("persona", persona)
            session = Session(session_id, user_id, character_id, client, persona)
            for e in events:
                if e.get("event") == "handoff" and e.get("clear_context"):
                    session.window_start = int(e["next_round"])
            if opened is None:
                self.store.append_event(
                    session_id,
                    {
                        "event": "session_open",
                        "session_id": session_id,
                        "user_id": user_id,
                        "character_id": character_id,
                        "persona": persona,
                        "model_label": client.label,
                        "timestamp": self.clock(),
                    },
                )
            self.sessions[session_id] = session
            return session

    def session(self, session_id: str) -> Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise SessionError(f"session {session_id} is not open") from None

    def next_round(self, session: Session) -> int:
        turns = self.store.turns(session.session_id)
        return turns[-1].round + 1 if turns else 1

    # ---- pipeline stages -----------------------------------------------------

    def retrieve(self, session: Session, user_input: str, r_current: int, now: float) -> RetrievalResult:
        cfg = self.config
        aug = augment_query(user_input, session.user_id, session.character_id)
        qctx = QueryContext(session.user_id, session.character_id, session.session_id)
        tctx = TemporalContext(r_current, now)
        knowledge: list[ScoredCandidate] = []
        experience: list[ScoredCandidate] = []
        if cfg.enable_knowledge_retrieval and cfg.knowledge_k > 0:
            hits = retrieve_knowledge(
                aug,
                cfg.rerank_depth,
                self.store.knowledge_index(),
                self.store.parents,
                self.store.embedder,
                cfg,
                qctx,
            )
            knowledge = rerank_route(hits, cfg.decay_for("knowledge"), tctx, cfg.enable_temporal)
        if cfg.enable_chat_retrieval and cfg.chat_history_k > 0:
            hits = retrieve_experience(aug, cfg.rerank_depth, self.store.experience_index(), self.store.embedder, cfg, qctx)
            experience = rerank_route(hits, cfg.decay_for("experience"), tctx, cfg.enable_temporal)
        merged = merge_routes(knowledge, experience, cfg.knowledge_k, cfg.chat_history_k)
        return RetrievalResult(aug, knowledge, experience, merged)

    def window(self, session: Session) -> list[tuple[int, str, str]]:
        if self.config.window_turns == 0:
            return []
        turns = [t for t in self.store.turns(session.session_id) if t.round >= session.window_start]
        return [(t.round, t.user_input, t.assistant_reply) for t in turns[-self.config.window_turns :]]

    def assemble(self, session: Session, retrieval: RetrievalResult, user_input: str, r_current: int, now: float) -> BuiltPrompt:
        cfg = self.config
        turns = self.store.turns(session.session_id)
        block = unfold_chronologically(
            retrieval.merged,
            TemporalContext(r_current, now),
            last_turn_ts=turns[-1].timestamp if turns else None,
            quotas={"knowledge": cfg.knowledge_k, "experience": cfg.chat_history_k},
        )
        return build_prompt(
            block,
            session.persona,
            user_input,
            window=self.window(session),
            budget_chars=cfg.prompt_budget_chars,
            template_version=STRONG_TEMPLATE if cfg.strong_preset else DEFAULT_TEMPLATE,
        )

    def preview(self, session_id: str, user_input: str, now: float, r_current: int | None = None) -> BuiltPrompt:
        """Build the prompt a turn would use, without calling the model or writing."""
        session = self.session(session_id)
        r = r_current if r_current is not None else self.next_round(session)
        retrieval = self.retrieve(session, user_input, r, now)
        return self.assemble(session, retrieval, user_input, r, now)

    # ---- turns ---------------------------------------------------------------

    def run_turn(self, session_id: str, user_input: str) -> TurnRecord:
        session = self.session(session_id)
        with session.lock:
            r = self.next_round(session)
            now = self.clock()
            retrieval = self.retrieve(session, user_input, r, now)
            built = self.assemble(session, retrieval, user_input, r, now)
            analysis: str | None = None
            try:
                _, parsed = repair_loop(
                    built.text, session.client, self.config.max_repairs, timeout=self.config.model_timeout_s
                )
                report, reply, analysis = parsed.report, parsed.response, parsed.analysis
            except ModelTimeout as exc:
                logger.warning("session %s round %d: model timeout (%s)", session_id, r, exc)
                report, reply = ComplianceReport(external_anomaly=f"timeout: {exc}"), ""
            except ModelError as exc:
                logger.warning("session %s round %d: model error (%s)", session_id, r, exc)
                report, reply = ComplianceReport(external_anomaly=f"model_error: {exc}"), ""
            report.truncations = built.truncations
            record = TurnRecord(
                chunk_id=f"turn:{session_id}:{r:06d}",
                session_id=session_id,
                round=r,
                user_input=user_input,
                assistant_reply=reply,
                timestamp=now,
                augmented_query=retrieval.augmented_query,
                candidates=built.evidence.candidates,
                analysis_text=analysis,
                compliance=report,
                user_id=session.user_id,
                character_id=session.character_id,
                model_label=session.client.label,
                template_version=built.template_version,
            )
            self.store.append_turn(record)
            return record

    def handoff(self, session_id: str, new_client: ModelClient, clear_context: bool = True) -> dict[str, Any]:
        """Swap the session's model client; optionally clear the in-window history.

        External memory is untouched either way.
        """
        session = self.session(session_id)
        with session.lock:
            nxt = self.next_round(session)
            event = {
                "event": "handoff",
                "session_id": session_id,
                "old_label": session.client.label,
                "new_label": new_client.label,
                "clear_context": clear_context,
                "next_round": nxt,
                "timestamp": self.clock(),
            }
            self.store.append_event(session_id, event)
            session.client = new_client
            if clear_context:
                session.window_start = nxt
            return event

    def replay(self, upto: dict[str, int] | None = None, clock: Clock | None = None) -> Engine:
        """An in-memory engine over the store state after a prefix of turns.

        Open sessions are re-registered with their current clients.
        """
        clone = Engine(self.store.replay(upto), self.config, clock or self.clock)
        for sid, s in self.sessions.items():
            clone.sessions[sid] = Session(s.session_id, s.user_id, s.character_id, s.client, s.persona, s.window_start)
        return clone
