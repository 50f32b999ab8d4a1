from __future__ import annotations

import sys
from pathlib import Path

import pytest

from arpm.clock import ScriptedClock
from arpm.config import EngineConfig
from arpm.memory_store import DocumentMeta
from arpm.orchestrator import Engine, EvidenceGroundedMock
from arpm.records import TurnRecord

sys.path.insert(0, str(Path(__file__).parent))

T0 = 1_767_225_600.0


def make_engine(root=None, config: EngineConfig | None = None, start: float = T0) -> Engine:
    return Engine.open(root, config or EngineConfig(), clock=ScriptedClock(start=start, step=3600), fsync=False)


def turn(session_id: str, rnd: int, user: str = "hi", reply: str = "hello", ts: float = T0) -> TurnRecord:
    return TurnRecord(
        chunk_id=f"turn:{session_id}:{rnd:06d}",
        session_id=session_id,
        round=rnd,
        user_input=user,
        assistant_reply=reply,
        timestamp=ts + rnd * 60,
        user_id="alice",
        character_id="mori",
        model_label="mock-a",
    )


@pytest.fixture
def engine() -> Engine:
    return make_engine()


@pytest.fixture
def lighthouse_engine() -> Engine:
    eng = make_engine()
    eng.ingest_many(
        [
            ("The lighthouse keeper on Gull Island is named Ansel Varga.", DocumentMeta(doc_id="lighthouse")),
            ("The river ferry to Oakmere departs from Pier Seven every hour.", DocumentMeta(doc_id="ferry")),
        ]
    )
    return eng


@pytest.fixture
def mock() -> EvidenceGroundedMock:
    return EvidenceGroundedMock(
        label="mock-a",
        answer_key=[(r"lighthouse keeper", "Ansel Varga"), (r"eat .*yesterday", "wontons")],
    )


# ---- acceptance summary: one line per criterion --------------------------------

_acceptance: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    name = report.nodeid.split("::")[-1]
    if report.failed:
        _acceptance[name] = "FAIL"
    elif report.when == "call" and name not in _acceptance:
        _acceptance[name] = "SKIP" if report.skipped else "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance.items():
        terminalreporter.write_line(f"{outcome}  {name}")
