"""Core record types shared across the engine, plus their JSON forms."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any


class SourceType(str, Enum):
    KNOWLEDGE_CHILD = "knowledge_child"
    KNOWLEDGE_PARENT = "knowledge_parent"
    EXPERIENCE = "experience"


@dataclass(frozen=True)
class MemoryChunk:
    chunk_id: str
    session_id: str
    source_type: SourceType
    text: str
    timestamp: float
    round: int
    user_id: str = ""
    character_id: str = ""
    parent_id: str | None = None
    source_label: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.source_type, SourceType):
            object.__setattr__(self, "source_type", SourceType(self.source_type))
        if (self.source_type is SourceType.KNOWLEDGE_CHILD) != (self.parent_id is not None):
            raise ValueError(f"{self.chunk_id}: parent_id must be set iff knowledge_child")
        if self.round < 0:
            raise ValueError(f"{self.chunk_id}: round must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["source_type"] = self.source_type.value
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> MemoryChunk:
        return cls(**d)


@dataclass
class ScoredCandidate:
    """A retrieval hit with its full score breakdown.

    ``chunk_id`` is the matched chunk (a child for knowledge hits);
    ``parent_id`` is the parent whose text is delivered. Experience hits
    have no parent.
    """

    chunk_id: str
    route: str
    text: str
    timestamp: float
    round: int
    parent_id: str | None = None
    source_label: str = ""
    s_vec: float = 0.0
    s_bm25: float = 0.0
    s_rrf: float = 0.0
    s_sem: float = 0.0
    base_score: float = 0.0
    temporal_weight: float = 1.0
    final_score: float = 0.0

    @property
    def key(self) -> str:
        """Identity used for dedup: the delivered unit."""
        return self.parent_id or self.chunk_id

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ScoredCandidate:
        return cls(**d)


@dataclass
class ComplianceReport:
    has_analysis_tag: bool = False
    has_response_tag: bool = False
    analysis_length_chars: int = 0
    repair_count: int = 0
    truncations: int = 0
    # tag presence on the first model answer of the turn, before any repair
    initial_has_analysis: bool = False
    initial_has_response: bool = False
    external_anomaly: str | None = None

    @property
    def compliant(self) -> bool:
        return self.has_analysis_tag and self.has_response_tag

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ComplianceReport:
        return cls(**d)


@dataclass
class TurnRecord:
    """One completed interaction, as written to the session log."""

    chunk_id: str
    session_id: str
    round: int
    user_input: str
    assistant_reply: str
    timestamp: float
    augmented_query: str = ""
    candidates: list[ScoredCandidate] = field(default_factory=list)
    analysis_text: str | None = None
    compliance: ComplianceReport = field(default_factory=ComplianceReport)
    source_type: str = SourceType.EXPERIENCE.value
    user_id: str = ""
    character_id: str = ""
    model_label: str = ""
    template_version: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "chunk_id": self.chunk_id,
            "session_id": self.session_id,
            "user_input": self.user_input,
            "assistant_reply": self.assistant_reply,
            "source_type": self.source_type,
            "timestamp": self.timestamp,
            "round": self.round,
            "augmented_query": self.augmented_query,
            "candidates": [c.to_dict() for c in self.candidates],
            "analysis_text": self.analysis_text,
            "compliance": self.compliance.to_dict(),
            "user_id": self.user_id,
            "character_id": self.character_id,
            "model_label": self.model_label,
            "template_version": self.template_version,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TurnRecord:
        d = dict(d)
        d["candidates"] = [ScoredCandidate.from_dict(c) for c in d.get("candidates", [])]
        d["compliance"] = ComplianceReport.from_dict(d.get("compliance", {}))
        return cls(**d)

    def to_json_line(self) -> bytes:
        # allow_nan=False: a NaN score would not round-trip through strict parsers
        text = json.dumps(self.to_dict(), ensure_ascii=False, allow_nan=False, separators=(",", ":"))
        return (text + "\n").encode("utf-8")
