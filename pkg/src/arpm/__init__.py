"""External temporal memory engine for long-horizon dialogue."""

from .clock import ScriptedClock, WallClock
from .config import EngineConfig, load_config
from .memory_store import DocumentMeta, MemoryStore
from .orchestrator import Engine, EvidenceGroundedMock
from .records import ComplianceReport, MemoryChunk, ScoredCandidate, SourceType, TurnRecord

__all__ = [
    "ComplianceReport",
    "DocumentMeta",
    "Engine",
    "EngineConfig",
    "EvidenceGroundedMock",
    "MemoryChunk",
    "MemoryStore",
    "ScoredCandidate",
    "ScriptedClock",
    "SourceType",
    "TurnRecord",
    "WallClock",
    "load_config",
]

__version__ = "0.1.0"
