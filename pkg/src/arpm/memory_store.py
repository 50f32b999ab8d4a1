"""Dual-source memory: knowledge (parent/child chunks) and experience (turns).

Persistence layout under a store root::

    knowledge.jsonl              one MemoryChunk per line (parents and children)
    sessions/<id>.jsonl          one TurnRecord per line
    sessions/<id>.events.jsonl   session open / handoff events

Every log is append-only. A record becomes visible only once its full line,
including the terminating LF, is on disk; a torn tail left by a crash is
ignored by readers and cut off by the next writer.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .config import ConfigError
from .records import MemoryChunk, SourceType, TurnRecord
from .retrieval.embedding import Embedder
from .retrieval.index import ExperienceIndex, KnowledgeIndex

logger = logging.getLogger(__name__)

_SAFE_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
_AUTO_DOC = re.compile(r"^kb:doc(\d+):")


class StoreError(RuntimeError):
    pass


class LogCorruptError(StoreError):
    def __init__(self, path: Path, line_no: int, reason: str) -> None:
        super().__init__(f"{path}:{line_no}: corrupt record ({reason})")
        self.path = path
        self.line_no = line_no


class CrashInjected(RuntimeError):
    """Raised by test crash hooks to simulate a process dying mid-append."""


# --------------------------------------------------------------------------
# chunking
# --------------------------------------------------------------------------


def split_windows(text: str, size: int, overlap: int = 0) -> list[str]:
    """Consecutive character windows of at most ``size``; the last may be short."""
    if size < 1 or not 0 <= overlap < size:
        raise ValueError("need size >= 1 and 0 <= overlap < size")
    step = size - overlap
    out = []
    start = 0
    while True:
        out.append(text[start : start + size])
        if start + size >= len(text):
            break
        start += step
    return out


@dataclass
class DocumentMeta:
    doc_id: str | None = None
    source_label: str = ""
    user_id: str = ""
    character_id: str = ""
    session_id: str = ""
    timestamp: float | None = None
    round: int = 0


def chunk_document(
    doc_text: str,
    meta: DocumentMeta,
    doc_id: str,
    timestamp: float,
    parent_size: int = 1000,
    child_size: int = 200,
    overlap: int = 0,
) -> list[MemoryChunk]:
    """Split a document into parents, each split into children.

    Returns parents and children interleaved (each parent followed by its
    children). Parents partition the text exactly; ``overlap`` applies to
    children within a parent.
    """
    if not doc_text:
        raise ValueError("empty document")
    if not parent_size >= child_size >= 1:
        raise ConfigError("need parent_size >= child_size >= 1")
    common = dict(
        session_id=meta.session_id,
        user_id=meta.user_id,
        character_id=meta.character_id,
        timestamp=timestamp,
        round=meta.round,
        source_label=meta.source_label or doc_id,
    )
    chunks: list[MemoryChunk] = []
    for pi, ptext in enumerate(split_windows(doc_text, parent_size)):
        pid = f"kb:{doc_id}:p{pi:04d}"
        chunks.append(MemoryChunk(chunk_id=pid, source_type=SourceType.KNOWLEDGE_PARENT, text=ptext, **common))
        for ci, ctext in enumerate(split_windows(ptext, child_size, overlap)):
            chunks.append(
                MemoryChunk(
                    chunk_id=f"{pid}:c{ci:04d}",
                    source_type=SourceType.KNOWLEDGE_CHILD,
                    parent_id=pid,
                    text=ctext,
                    **common,
                )
            )
    return chunks


def turn_chunks(record: TurnRecord) -> list[MemoryChunk]:
    """Experience chunks written back for a completed turn.

    The analysis text is logged but never indexed; an empty reply (model
    timeout) produces no assistant chunk.
    """
    base = f"exp:{record.session_id}:{record.round:06d}"
    common = dict(
        session_id=record.session_id,
        source_type=SourceType.EXPERIENCE,
        timestamp=record.timestamp,
        round=record.round,
        user_id=record.user_id,
        character_id=record.character_id,
    )
    out = [MemoryChunk(chunk_id=f"{base}:q", text=record.user_input, source_label="chat:user", **common)]
    if record.assistant_reply:
        out.append(
            MemoryChunk(chunk_id=f"{base}:r", text=record.assistant_reply, source_label="chat:assistant", **common)
        )
    return out


# --------------------------------------------------------------------------
# append-only JSONL
# --------------------------------------------------------------------------


class JsonlLog:
    """Append-only JSON-lines file with atomic record publication.

    Each append is staged fully in memory, then published with a single
    ``write`` on an ``O_APPEND`` descriptor and fsynced. ``crash_hook`` is
    called with a stage name (``"staged"``, ``"partial"``, ``"written"``) and
    may raise to simulate a crash at that point; at ``"partial"`` only a
    prefix of the record has been written.
    """

    def __init__(
        self,
        path: str | Path,
        fsync: bool = True,
        crash_hook: Callable[[str], None] | None = None,
    ) -> None:
        self.path = Path(path)
        self.fsync = fsync
        self.crash_hook = crash_hook
        self._lock = threading.Lock()
        self._recovered = False

    def _recover(self) -> None:
        # drop an unterminated tail left by an interrupted append
        if not self.path.exists():
            self._recovered = True
            return
        with open(self.path, "rb+") as fh:
            data = fh.read()
            if data and not data.endswith(b"\n"):
                cut = data.rfind(b"\n") + 1
                logger.warning("%s: discarding %d-byte torn tail", self.path, len(data) - cut)
                fh.truncate(cut)
                fh.flush()
                os.fsync(fh.fileno())
        self._recovered = True

    def append(self, records: Sequence[dict[str, Any]] | bytes) -> int:
        """Append one or more records atomically; returns the byte offset."""
        if isinstance(records, bytes):
            payload = records
        else:
            payload = b"".join(
                (json.dumps(r, ensure_ascii=False, allow_nan=False, separators=(",", ":")) + "\n").encode("utf-8")
                for r in records
            )
        if not payload.endswith(b"\n"):
            raise ValueError("payload must be LF-terminated")
        with self._lock:
            if not self._recovered:
                self._recover()
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if self.crash_hook:
                self.crash_hook("staged")
            fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
            try:
                offset = os.lseek(fd, 0, os.SEEK_END)
                if self.crash_hook:
                    try:
                        self.crash_hook("partial")
                    except CrashInjected:
                        os.write(fd, payload[: max(1, len(payload) // 2)])
                        self._recovered = False
                        raise
                written = os.write(fd, payload)
                if written != len(payload):
                    os.ftruncate(fd, offset)
                    raise StoreError(f"short write to {self.path} ({written}/{len(payload)} bytes)")
                if self.crash_hook:
                    self.crash_hook("written")
                if self.fsync:
                    os.fsync(fd)
            finally:
                os.close(fd)
        return offset

    @staticmethod
    def read(path: str | Path) -> list[dict[str, Any]]:
        """Parse all committed records; an unterminated final line is ignored."""
        path = Path(path)
        with open(path, "rb") as fh:
            data = fh.read()
        lines = data.split(b"\n")
        # the element after the last LF is either empty or a torn tail
        committed = lines[:-1]
        out = []
        for no, raw in enumerate(committed, start=1):
            try:
                obj = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise LogCorruptError(path, no, str(exc)) from exc
            if not isinstance(obj, dict):
                raise LogCorruptError(path, no, "not a JSON object")
            out.append(obj)
        return out


# --------------------------------------------------------------------------
# the store
# --------------------------------------------------------------------------


@dataclass
class _State:
    parents: dict[str, MemoryChunk] = field(default_factory=dict)
    children: list[MemoryChunk] = field(default_factory=list)
    experience: list[MemoryChunk] = field(default_factory=list)
    turns: dict[str, list[TurnRecord]] = field(default_factory=dict)


class MemoryStore:
    """Holds both memory sources and their index snapshots.

    ``root=None`` keeps everything in memory (no persistence). Writes are
    serialised by a store lock; index snapshots are immutable and replaced on
    write, so readers never observe a half-applied update.
    """

    def __init__(
        self,
        root: str | Path | None,
        embedder: Embedder,
        fsync: bool = True,
        crash_hook: Callable[[str], None] | None = None,
    ) -> None:
        self.root = Path(root) if root is not None else None
        self.embedder = embedder
        self.fsync = fsync
        self.crash_hook = crash_hook
        self._lock = threading.RLock()
        self._state = _State()
        self._kindex = KnowledgeIndex.build([], embedder)
        self._kpending: list[MemoryChunk] = []
        self._eindex = ExperienceIndex.build([], embedder)
        self._epending: list[MemoryChunk] = []
        self._logs: dict[Path, JsonlLog] = {}
        self._doc_counter = 0
        self._knowledge_ids: set[str] = set()
        self._events: dict[str, list[dict[str, Any]]] = {}
        if self.root is not None:
            self._load()

    # ---- paths / logs ----------------------------------------------------

    def _log(self, path: Path) -> JsonlLog:
        log = self._logs.get(path)
        if log is None:
            log = self._logs[path] = JsonlLog(path, fsync=self.fsync, crash_hook=self.crash_hook)
        return log

    @staticmethod
    def _check_session_id(session_id: str) -> None:
        # session ids become file names, so anything path-like is refused
        if not _SAFE_ID.match(session_id):
            raise StoreError(f"invalid session_id {session_id!r}")

    def session_path(self, session_id: str) -> Path:
        self._check_session_id(session_id)
        if self.root is None:
            raise StoreError("in-memory store has no session files")
        return self.root / "sessions" / f"{session_id}.jsonl"

    def events_path(self, session_id: str) -> Path:
        self._check_session_id(session_id)
        if self.root is None:
            raise StoreError("in-memory store has no session files")
        return self.root / "sessions" / f"{session_id}.events.jsonl"

    def _load(self) -> None:
        assert self.root is not None
        kpath = self.root / "knowledge.jsonl"
        if kpath.exists():
            self._add_knowledge([MemoryChunk.from_dict(d) for d in JsonlLog.read(kpath)])
        sdir = self.root / "sessions"
        if sdir.is_dir():
            for p in sorted(sdir.glob("*.jsonl")):
                if p.name.endswith(".events.jsonl"):
                    continue
                for rec in self.load_session(p.stem):
                    self._add_turn(rec)

    # ---- knowledge ---------------------------------------------------------

    def _add_knowledge(self, chunks: Iterable[MemoryChunk]) -> None:
        for c in chunks:
            if c.chunk_id in self._knowledge_ids:
                raise StoreError(f"duplicate chunk_id {c.chunk_id}")
            if c.source_type is SourceType.KNOWLEDGE_PARENT:
                self._state.parents[c.chunk_id] = c
            elif c.source_type is SourceType.KNOWLEDGE_CHILD:
                if c.parent_id not in self._state.parents:
                    raise StoreError(f"{c.chunk_id}: parent {c.parent_id} does not exist")
                self._state.children.append(c)
                self._kpending.append(c)
            else:
                raise StoreError(f"{c.chunk_id}: not a knowledge chunk")
            self._knowledge_ids.add(c.chunk_id)
            m = _AUTO_DOC.match(c.chunk_id)
            if m:
                self._doc_counter = max(self._doc_counter, int(m.group(1)))

    def ingest_knowledge_document(
        self,
        doc_text: str,
        meta: DocumentMeta | None = None,
        parent_size: int = 1000,
        child_size: int = 200,
        overlap: int = 0,
        timestamp: float = 0.0,
    ) -> list[MemoryChunk]:
        return self.ingest_many([(doc_text, meta or DocumentMeta())], parent_size, child_size, overlap, timestamp)

    def ingest_many(
        self,
        docs: Iterable[tuple[str, DocumentMeta]],
        parent_size: int = 1000,
        child_size: int = 200,
        overlap: int = 0,
        timestamp: float = 0.0,
    ) -> list[MemoryChunk]:
        """Chunk and persist several documents in one atomic append."""
        with self._lock:
            out: list[MemoryChunk] = []
            counter = self._doc_counter
            seen: set[str] = set()
            for text, meta in docs:
                if meta.doc_id is None:
                    counter += 1
                    doc_id = f"doc{counter:06d}"
                else:
                    if not _SAFE_ID.match(meta.doc_id):
                        raise ValueError(f"invalid doc_id {meta.doc_id!r}")
                    doc_id = meta.doc_id
                if doc_id in seen or f"kb:{doc_id}:p0000" in self._state.parents:
                    raise StoreError(f"document {doc_id} already ingested")
                seen.add(doc_id)
                ts = meta.timestamp if meta.timestamp is not None else timestamp
                out.extend(chunk_document(text, meta, doc_id, ts, parent_size, child_size, overlap))
            if self.root is not None and out:
                self._log(self.root / "knowledge.jsonl").append([c.to_dict() for c in out])
            self._add_knowledge(out)
            self._doc_counter = max(self._doc_counter, counter)
            return out

    @property
    def parents(self) -> dict[str, MemoryChunk]:
        return self._state.parents

    def knowledge_index(self) -> KnowledgeIndex:
        with self._lock:
            if self._kpending:
                self._kindex = self._kindex.extended(self._kpending, self.embedder)
                self._kpending = []
            return self._kindex

    # ---- experience / turns ----------------------------------------------

    def _add_turn(self, record: TurnRecord) -> None:
        turns = self._state.turns.setdefault(record.session_id, [])
        expected = turns[-1].round + 1 if turns else 1
        if record.round != expected:
            raise StoreError(f"session {record.session_id}: expected round {expected}, got {record.round}")
        turns.append(record)
        chunks = turn_chunks(record)
        self._state.experience.extend(chunks)
        self._epending.extend(chunks)

    def append_turn(self, record: TurnRecord) -> int:
        """Persist a turn record and write its experience chunks back.

        Returns the byte offset of the record in the session log (0 for an
        in-memory store). Nothing changes if serialisation or the write fails.
        """
        self._check_session_id(record.session_id)
        payload = record.to_json_line()  # raises before anything is touched
        with self._lock:
            turns = self._state.turns.get(record.session_id, [])
            expected = turns[-1].round + 1 if turns else 1
            if record.round != expected:
                raise StoreError(f"session {record.session_id}: expected round {expected}, got {record.round}")
            offset = 0
            if self.root is not None:
                offset = self._log(self.session_path(record.session_id)).append(payload)
            self._add_turn(record)
            return offset

    def experience_index(self) -> ExperienceIndex:
        with self._lock:
            if self._epending:
                self._eindex = self._eindex.extended(self._epending, self.embedder)
                self._epending = []
            return self._eindex

    def turns(self, session_id: str) -> list[TurnRecord]:
        return list(self._state.turns.get(session_id, []))

    def session_ids(self) -> list[str]:
        return sorted(self._state.turns)

    @property
    def experience_chunks(self) -> list[MemoryChunk]:
        return list(self._state.experience)

    @property
    def knowledge_children(self) -> list[MemoryChunk]:
        return list(self._state.children)

    def load_session(self, session_id: str) -> list[TurnRecord]:
        """Read a session log from disk, in round order."""
        path = self.session_path(session_id)
        if not path.exists():
            raise FileNotFoundError(f"no log for session {session_id}")
        records = [TurnRecord.from_dict(d) for d in JsonlLog.read(path)]
        records.sort(key=lambda r: r.round)
        return records

    # ---- session events ----------------------------------------------------

    def append_event(self, session_id: str, event: dict[str, Any]) -> None:
        self._check_session_id(session_id)
        if self.root is None:
            self._events.setdefault(session_id, []).append(dict(event))
            return
        self._log(self.events_path(session_id)).append([event])

    def load_events(self, session_id: str) -> list[dict[str, Any]]:
        if self.root is None:
            return list(self._events.get(session_id, []))
        path = self.events_path(session_id)
        return JsonlLog.read(path) if path.exists() else []

    # ---- replay ------------------------------------------------------------

    def replay(self, upto: dict[str, int] | None = None) -> MemoryStore:
        """In-memory copy of this store's state after a prefix of turns.

        ``upto`` maps session_id to the last round to include; sessions not
        listed are replayed in full.
        """
        upto = upto or {}
        clone = MemoryStore(None, self.embedder)
        with self._lock:
            parents = list(self._state.parents.values())
            children = list(self._state.children)
            sessions = {s: list(t) for s, t in self._state.turns.items()}
        # parents first so every child finds its parent
        clone._add_knowledge(parents)
        clone._add_knowledge(children)
        clone._doc_counter = self._doc_counter
        for sid in sorted(sessions):
            limit = upto.get(sid)
            for rec in sessions[sid]:
                if limit is not None and rec.round > limit:
                    break
                clone._add_turn(rec)
        return clone
