from .clients import (
    ACK_REPLY,
    UNKNOWN_MARKER,
    EvidenceGroundedMock,
    HttpModelClient,
    ModelClient,
    ModelError,
    ModelTimeout,
    read_evidence,
    read_query,
)
from .engine import DEFAULT_PERSONA, Engine, RetrievalResult, Session, SessionError
from .protocol import REPAIR_INSTRUCTION, ParsedResponse, parse_tagged_response, repair_loop

__all__ = [
    "ACK_REPLY",
    "DEFAULT_PERSONA",
    "REPAIR_INSTRUCTION",
    "UNKNOWN_MARKER",
    "Engine",
    "EvidenceGroundedMock",
    "HttpModelClient",
    "ModelClient",
    "ModelError",
    "ModelTimeout",
    "ParsedResponse",
    "RetrievalResult",
    "Session",
    "SessionError",
    "parse_tagged_response",
    "read_evidence",
    "read_query",
    "repair_loop",
]
