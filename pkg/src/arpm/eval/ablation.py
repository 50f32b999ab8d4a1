"""Toggle ablations on a small constructed suite with a deterministic mock.

The suite has three kinds of questions:

* plain knowledge questions whose wording overlaps their document,
* rare-term knowledge questions keyed by an inventory code; look-alike
  documents with other codes crowd the dense ranking, so only the keyword
  leg pins the right one,
* chat questions answerable only from what the user said earlier in the
  session, two of them about facts the user later corrected.

Every answer the mock gives is a pure function of the evidence in the
prompt, so each toggle's accuracy delta follows from what it removes.
"""

from __future__ import annotations

import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from ..clock import ScriptedClock
from ..config import EngineConfig
from ..evidence import chronological_key
from ..memory_store import DocumentMeta
from ..orchestrator.clients import EvidenceGroundedMock
from ..orchestrator.engine import Engine
from ..records import TurnRecord
from ..retrieval.scoring import rank_key


@dataclass(frozen=True)
class Probe:
    question: str
    gold: str
    kind: str  # "knowledge" | "rare" | "chat"
    # for corrected facts: index into the setup statements of the superseded one
    superseded: int | None = None
    correction: int | None = None


@dataclass(frozen=True)
class Fixture:
    documents: tuple[tuple[str, str], ...]
    setup: tuple[str, ...]
    probes: tuple[Probe, ...]
    user_id: str = "alice"
    character_id: str = "mori"


_BAYS = (
    ("7731", "copper turbine spares"),
    ("4406", "sealed saffron crates"),
    ("9158", "antique clock springs"),
)
_DECOYS = (
    ("1204", "grain sacks"),
    ("2318", "salt barrels"),
    ("3527", "rope coils"),
    ("5640", "lamp oil"),
    ("6815", "tin plates"),
)


def _bay_docs() -> list[tuple[str, str]]:
    # Look-alike ledger lines repeat the question's common words, so they beat
    # the longer gold entries on the dense leg; only the code tells them apart.
    docs = [
        (
            f"depot-{code}",
            f"Eastern depot ledger, page {b + 3}. Warehouse bay {code} holds {goods}, "
            "checked in by the night clerk after the spring audit and sealed with a red tag.",
        )
        for b, (code, goods) in enumerate(_BAYS)
    ]
    for code, goods in _DECOYS:
        docs.append((f"decoy-{code}", f"Warehouse bay {code} stored {goods}. Warehouse bay {code} is stored full."))
    return docs


def default_fixture() -> Fixture:
    """Fifteen questions: 7 plain knowledge, 3 rare-term knowledge, 5 chat-only."""
    documents = [
        ("lighthouse", "The lighthouse keeper on Gull Island is named Ansel Varga."),
        ("ferry", "The river ferry to Oakmere departs from Pier Seven every hour."),
        ("greenhouse", "The botanical garden greenhouse keeps its orchids at twenty four degrees."),
        ("library", "A city library card costs twelve crowns per year for residents."),
        ("railway", "The mountain railway reaches Eagle Pass station at an altitude of 2400 metres."),
        ("festival", "The annual lantern festival is held on the riverbank in late October."),
        ("observatory", "The observatory telescope mirror measures three and a half metres across."),
        *_bay_docs(),
    ]
    setup = (
        "My gym locker code is 4812.",
        "My dentist appointment is on Tuesday.",
        "Yesterday I ate steamed wontons at the night market.",
        "My sister Mirela is visiting me next weekend.",
        "I parked my bike by the blue kiosk this morning.",
        "The weather was lovely on my walk today.",
        "Update: I changed my gym locker code to 9307.",
        "Update: my dentist appointment moved to Friday.",
    )
    probes = (
        Probe("Who is the lighthouse keeper on Gull Island?", "Ansel Varga", "knowledge"),
        Probe("Which pier does the river ferry to Oakmere leave from?", "Pier Seven", "knowledge"),
        Probe("At what temperature does the botanical garden greenhouse keep orchids?", "twenty four degrees", "knowledge"),
        Probe("How much does a city library card cost per year?", "twelve crowns", "knowledge"),
        Probe("What altitude does the mountain railway reach at Eagle Pass station?", "2400 metres", "knowledge"),
        Probe("When is the annual lantern festival held on the riverbank?", "late October", "knowledge"),
        Probe("How large is the observatory telescope mirror?", "three and a half metres", "knowledge"),
        *(Probe(f"What is stored in warehouse bay {code}?", goods, "rare") for code, goods in _BAYS),
        Probe("What did I eat at the night market yesterday?", "wontons", "chat"),
        Probe("Which sister is visiting me next weekend?", "Mirela", "chat"),
        Probe("Where did I park my bike this morning?", "blue kiosk", "chat"),
        Probe("What is my gym locker code?", "9307", "chat", superseded=0, correction=6),
        Probe("When is my dentist appointment?", "Friday", "chat", superseded=1, correction=7),
    )
    return Fixture(tuple(documents), setup, probes)


DEFAULT_MATRIX: dict[str, dict[str, bool]] = {
    "full": {},
    "no_chat_retrieval": {"enable_chat_retrieval": False},
    "no_bm25": {"enable_bm25": False},
    "no_temporal": {"enable_temporal": False},
    "pure_dialogue": {"pure_dialogue": True},
    "strong_preset": {"strong_preset": True},
}


@dataclass
class ProbeResult:
    question: str
    kind: str
    gold: str
    reply: str
    correct: bool
    anomaly: bool


@dataclass
class AblationRow:
    setting: str
    toggles: dict[str, bool]
    correct: int
    total: int
    anomalies: int
    repairs: int
    probes: list[ProbeResult] = field(default_factory=list)

    @property
    def strict_accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "setting": self.setting,
            "toggles": dict(sorted(self.toggles.items())),
            "strict_accuracy": round(self.strict_accuracy, 6),
            "correct": self.correct,
            "total": self.total,
            "anomalies": self.anomalies,
            "repairs": self.repairs,
        }


def _exp_id(session_id: str, rnd: int) -> str:
    return f"exp:{session_id}:{rnd:06d}:q"


def detect_anomaly(turn: TurnRecord, superseded_id: str | None = None, correction_id: str | None = None) -> bool:
    """Flag evidence out of chronological order, or a stale fact ranked above its correction.

    The stale chunk counts against the turn when it reached the prompt and
    either the correction did not, or the correction scored lower.
    """
    keys = [chronological_key(c) for c in turn.candidates]
    if keys != sorted(keys):
        return True
    if superseded_id is None:
        return False
    by_id = {c.chunk_id: c for c in turn.candidates}
    old = by_id.get(superseded_id)
    if old is None:
        return False
    new = by_id.get(correction_id) if correction_id else None
    if new is None:
        return True
    return rank_key(old.final_score, old.chunk_id) < rank_key(new.final_score, new.chunk_id)


def run_setting(
    fixture: Fixture,
    setting: str,
    toggles: Mapping[str, bool],
    base_config: EngineConfig | None = None,
    start: float = 1_767_225_600.0,
) -> AblationRow:
    config = (base_config or EngineConfig()).with_toggles(**toggles)
    clock = ScriptedClock(start=start, step=3600)
    engine = Engine.open(None, config, clock=clock)
    engine.ingest_many([(text, DocumentMeta(doc_id=doc_id)) for doc_id, text in fixture.documents])
    mock = EvidenceGroundedMock(
        label="mock-ablation",
        answer_key=[(rf"^{re.escape(p.question)}$", p.gold) for p in fixture.probes],
    )
    sid = f"ablation-{setting}"
    engine.open_session(sid, mock, user_id=fixture.user_id, character_id=fixture.character_id)
    setup_rounds = []
    for statement in fixture.setup:
        setup_rounds.append(engine.run_turn(sid, statement).round)
    results = []
    repairs = 0
    for p in fixture.probes:
        turn = engine.run_turn(sid, p.question)
        repairs += turn.compliance.repair_count
        old = _exp_id(sid, setup_rounds[p.superseded]) if p.superseded is not None else None
        new = _exp_id(sid, setup_rounds[p.correction]) if p.correction is not None else None
        results.append(
            ProbeResult(
                question=p.question,
                kind=p.kind,
                gold=p.gold,
                reply=turn.assistant_reply,
                correct=p.gold in turn.assistant_reply,
                anomaly=detect_anomaly(turn, old, new),
            )
        )
    return AblationRow(
        setting=setting,
        toggles=dict(toggles),
        correct=sum(r.correct for r in results),
        total=len(results),
        anomalies=sum(r.anomaly for r in results),
        repairs=repairs,
        probes=results,
    )


def run_ablation(
    matrix: Mapping[str, Mapping[str, bool]] | None = None,
    fixture: Fixture | None = None,
    base_config: EngineConfig | None = None,
) -> list[AblationRow]:
    """One row per setting, in the matrix's order. Unknown toggles raise ``ConfigError``."""
    matrix = DEFAULT_MATRIX if matrix is None else matrix
    fixture = fixture or default_fixture()
    base = base_config or EngineConfig()
    for toggles in matrix.values():
        base.with_toggles(**toggles)  # validate every setting before running any
    return [run_setting(fixture, name, toggles, base) for name, toggles in matrix.items()]


def format_table(rows: Sequence[AblationRow]) -> str:
    lines = [f"{'setting':<20} {'strict_acc':>10} {'correct':>8} {'anomalies':>9} {'repairs':>7}"]
    for r in rows:
        lines.append(
            f"{r.setting:<20} {r.strict_accuracy * 100:>9.1f}% {r.correct:>4}/{r.total:<3} {r.anomalies:>9} {r.repairs:>7}"
        )
    return "\n".join(lines)
