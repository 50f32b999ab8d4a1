from __future__ import annotations

import json
import random

import pytest
from conftest import T0, turn
from hypothesis import given
from hypothesis import strategies as st

from arpm.config import ConfigError
from arpm.memory_store import (
    CrashInjected,
    DocumentMeta,
    JsonlLog,
    LogCorruptError,
    MemoryStore,
    StoreError,
    chunk_document,
    split_windows,
)
from arpm.records import MemoryChunk, SourceType, TurnRecord
from arpm.retrieval import HashingEmbedder


@pytest.fixture
def store(tmp_path):
    return MemoryStore(tmp_path, HashingEmbedder(64), fsync=False)


class TestChunking:
    @pytest.mark.parametrize(
        "length, parents, children",
        [(2000, 2, 10), (1, 1, 1), (1050, 2, 6), (1000, 1, 5), (999, 1, 5)],
    )
    def test_counts(self, length, parents, children):
        chunks = chunk_document("x" * length, DocumentMeta(), "d", 0.0, 1000, 200)
        kinds = [c.source_type for c in chunks]
        assert kinds.count(SourceType.KNOWLEDGE_PARENT) == parents
        assert kinds.count(SourceType.KNOWLEDGE_CHILD) == children

    def test_remainder_parent(self):
        chunks = chunk_document("a" * 1050, DocumentMeta(), "d", 0.0, 1000, 200)
        parents = [c for c in chunks if c.parent_id is None]
        assert [len(p.text) for p in parents] == [1000, 50]

    def test_children_reference_parent(self):
        chunks = chunk_document("abcdefghij" * 50, DocumentMeta(), "doc", 5.0, 100, 30)
        parent_ids = {c.chunk_id for c in chunks if c.parent_id is None}
        for c in chunks:
            if c.source_type is SourceType.KNOWLEDGE_CHILD:
                assert c.parent_id in parent_ids
                assert c.chunk_id.startswith(c.parent_id + ":c")

    def test_empty_document_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            chunk_document("", DocumentMeta(), "d", 0.0)

    @pytest.mark.parametrize("parent, child", [(100, 200), (10, 0)])
    def test_invalid_sizes(self, parent, child):
        with pytest.raises(ConfigError):
            chunk_document("text", DocumentMeta(), "d", 0.0, parent, child)

    @given(st.text(min_size=1, max_size=400), st.integers(1, 50), st.integers(0, 10))
    def test_windows_cover_text(self, text, size, overlap):
        if overlap >= size:
            overlap = size - 1
        wins = split_windows(text, size, overlap)
        assert all(1 <= len(w) <= size for w in wins)
        if overlap == 0:
            assert "".join(wins) == text
        assert wins[0] == text[:size]
        assert text.endswith(wins[-1])

    @given(st.text(min_size=1, max_size=300), st.integers(1, 40))
    def test_parents_partition_text(self, text, parent):
        chunks = chunk_document(text, DocumentMeta(), "d", 0.0, parent, max(1, parent // 3))
        assert "".join(c.text for c in chunks if c.parent_id is None) == text


class TestKnowledge:
    def test_ingest_persists_and_reloads(self, tmp_path, store):
        store.ingest_knowledge_document("x" * 450, DocumentMeta(doc_id="manual"), 200, 100, timestamp=T0)
        again = MemoryStore(tmp_path, HashingEmbedder(64))
        assert sorted(again.parents) == ["kb:manual:p0000", "kb:manual:p0001", "kb:manual:p0002"]
        assert len(again.knowledge_children) == 5

    def test_auto_doc_ids_continue_after_reload(self, tmp_path, store):
        store.ingest_knowledge_document("first")
        store.ingest_knowledge_document("second")
        again = MemoryStore(tmp_path, HashingEmbedder(64))
        chunks = again.ingest_knowledge_document("third")
        assert chunks[0].chunk_id == "kb:doc000003:p0000"

    def test_duplicate_doc_rejected(self, store):
        store.ingest_knowledge_document("a", DocumentMeta(doc_id="same"))
        with pytest.raises(StoreError, match="already ingested"):
            store.ingest_knowledge_document("b", DocumentMeta(doc_id="same"))

    def test_text_verbatim(self, store):
        text = "Ünïcödé  text\twith   spacing\n和中文"
        store.ingest_knowledge_document(text, DocumentMeta(doc_id="u"))
        assert store.parents["kb:u:p0000"].text == text

    def test_child_needs_parent(self, store):
        orphan = MemoryChunk("kb:x:p0000:c0000", "", SourceType.KNOWLEDGE_CHILD, "t", 0.0, 0, parent_id="kb:x:p0000")
        with pytest.raises(StoreError, match="does not exist"):
            store._add_knowledge([orphan])


class TestTurns:
    def test_append_to_empty_log(self, store):
        store.append_turn(turn("s1", 1))
        lines = store.session_path("s1").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["round"] == 1

    def test_wire_field_names(self, store):
        store.append_turn(turn("s1", 1))
        obj = json.loads(store.session_path("s1").read_text(encoding="utf-8"))
        for name in (
            "chunk_id",
            "session_id",
            "user_input",
            "assistant_reply",
            "source_type",
            "timestamp",
            "round",
            "candidates",
            "analysis_text",
            "compliance",
        ):
            assert name in obj

    def test_write_back_two_chunks_per_turn(self, store):
        store.append_turn(turn("s1", 1, "I ate wontons", "Noted."))
        store.append_turn(turn("s1", 2, "and dumplings", "Noted again."))
        exp = store.experience_chunks
        assert len(exp) == 4
        assert [c.source_label for c in exp] == ["chat:user", "chat:assistant"] * 2
        assert exp[0].round == 1 and exp[0].timestamp == exp[1].timestamp

    def test_analysis_not_indexed(self, store):
        rec = turn("s1", 1)
        rec.analysis_text = "secret reasoning"
        store.append_turn(rec)
        assert all("secret" not in c.text for c in store.experience_chunks)

    def test_empty_reply_writes_only_user_chunk(self, store):
        store.append_turn(turn("s1", 1, "question", ""))
        assert [c.chunk_id for c in store.experience_chunks] == ["exp:s1:000001:q"]

    def test_rounds_must_increase_by_one(self, store):
        store.append_turn(turn("s1", 1))
        with pytest.raises(StoreError, match="expected round 2"):
            store.append_turn(turn("s1", 3))
        with pytest.raises(StoreError):
            store.append_turn(turn("s2", 0))

    def test_unserialisable_record_leaves_store_unchanged(self, store):
        rec = turn("s1", 1)
        rec.timestamp = float("nan")
        with pytest.raises(ValueError):
            store.append_turn(rec)
        assert store.turns("s1") == []
        assert not store.session_path("s1").exists()

    @pytest.mark.parametrize("sid", ["../escape", "", "a/b", ".hidden"])
    def test_bad_session_id(self, store, sid):
        with pytest.raises(StoreError, match="invalid session_id"):
            store.append_turn(turn(sid, 1))

    def test_load_session_round_order(self, store):
        for r in (1, 2, 3):
            store.append_turn(turn("s1", r))
        assert [t.round for t in store.load_session("s1")] == [1, 2, 3]

    def test_load_empty_log(self, store):
        store.session_path("s1").parent.mkdir(parents=True)
        store.session_path("s1").write_bytes(b"")
        assert store.load_session("s1") == []

    def test_load_missing(self, store):
        with pytest.raises(FileNotFoundError):
            store.load_session("nope")

    def test_corrupt_line_reports_line_number(self, store):
        store.append_turn(turn("s1", 1))
        with open(store.session_path("s1"), "ab") as fh:
            fh.write(b"{not json}\n")
        store.append_turn(turn("s1", 2))
        with pytest.raises(LogCorruptError) as err:
            store.load_session("s1")
        assert err.value.line_no == 2

    def test_reload_restores_state(self, tmp_path, store):
        for r in (1, 2):
            store.append_turn(turn("s1", r, f"input {r}", f"reply {r}"))
        again = MemoryStore(tmp_path, HashingEmbedder(64))
        assert [t.round for t in again.turns("s1")] == [1, 2]
        assert len(again.experience_chunks) == 4

    def test_round_trip_identity(self, store):
        rec = turn("s1", 1, "ünï 中文 \"quoted\"", "line\nbreak")
        rec.analysis_text = "because"
        store.append_turn(rec)
        assert store.load_session("s1")[0] == rec


class TestReplay:
    def test_prefix(self, store):
        for r in (1, 2, 3):
            store.append_turn(turn("s1", r))
        store.append_turn(turn("s2", 1))
        clone = store.replay({"s1": 2})
        assert [t.round for t in clone.turns("s1")] == [1, 2]
        assert len(clone.turns("s2")) == 1
        assert len(clone.experience_chunks) == 6
        assert clone.root is None

    def test_replay_is_isolated(self, store):
        store.append_turn(turn("s1", 1))
        clone = store.replay()
        clone.append_turn(turn("s1", 2))
        assert len(store.turns("s1")) == 1


class TestJsonlLog:
    def test_torn_tail_ignored_then_truncated(self, tmp_path):
        path = tmp_path / "log.jsonl"
        log = JsonlLog(path, fsync=False)
        log.append([{"a": 1}])
        with open(path, "ab") as fh:
            fh.write(b'{"a": 2, "tor')
        assert JsonlLog.read(path) == [{"a": 1}]
        JsonlLog(path, fsync=False).append([{"a": 3}])
        assert JsonlLog.read(path) == [{"a": 1}, {"a": 3}]

    def test_payload_must_end_with_newline(self, tmp_path):
        with pytest.raises(ValueError):
            JsonlLog(tmp_path / "x.jsonl").append(b"{}")

    @pytest.mark.parametrize("stage, visible", [("staged", 0), ("partial", 0), ("written", 1)])
    def test_crash_stages(self, tmp_path, stage, visible):
        path = tmp_path / "log.jsonl"

        def hook(s):
            if s == stage:
                raise CrashInjected(s)

        with pytest.raises(CrashInjected):
            JsonlLog(path, fsync=False, crash_hook=hook).append([{"x": 1}])
        assert len(JsonlLog.read(path)) == visible if path.exists() else visible == 0

    def test_randomised_crashes_keep_log_parseable(self, tmp_path):
        rng = random.Random(3)
        path = tmp_path / "log.jsonl"
        n = 0
        for i in range(200):
            stage = rng.choice([None, None, "staged", "partial", "written"])

            def hook(s, stage=stage):
                if s == stage:
                    raise CrashInjected(s)

            try:
                JsonlLog(path, fsync=False, crash_hook=hook).append([{"i": i}])
                n += 1
            except CrashInjected:
                count = len(JsonlLog.read(path))
                assert count in (n, n + 1)
                n = count
        assert len(JsonlLog.read(path)) == n


class TestEvents:
    def test_events_persist(self, tmp_path, store):
        store.append_event("s1", {"event": "handoff", "new_label": "b"})
        assert MemoryStore(tmp_path, HashingEmbedder(64)).load_events("s1") == [{"event": "handoff", "new_label": "b"}]

    def test_in_memory_events(self):
        mem = MemoryStore(None, HashingEmbedder(64))
        mem.append_event("s", {"event": "x"})
        assert mem.load_events("s") == [{"event": "x"}]
        assert mem.load_events("other") == []


def test_turn_record_from_dict_roundtrip():
    rec = turn("s", 4)
    assert TurnRecord.from_dict(json.loads(rec.to_json_line())) == rec
