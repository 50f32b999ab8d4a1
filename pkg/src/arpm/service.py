"""Optional HTTP front end over an :class:`Engine`.

Run with ``uvicorn --factory arpm.service:app_from_env``; the store
directory comes from ``ARPM_STORE`` and the config file from
``ARPM_CONFIG``. Model labels starting with ``mock`` get an
:class:`EvidenceGroundedMock`; any other label uses the HTTP completion
client configured by ``ARPM_MODEL_URL`` / ``ARPM_MODEL_KEY``.
"""

from __future__ import annotations

import os
from collections.abc import Callable
from typing import Any

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .config import load_config
from .memory_store import StoreError
from .orchestrator.clients import EvidenceGroundedMock, HttpModelClient, ModelClient
from .orchestrator.engine import DEFAULT_PERSONA, Engine, SessionError


class OpenSession(BaseModel):
    session_id: str
    user_id: str = "user"
    character_id: str = "assistant"
    model_label: str = "mock-a"
    persona: str = DEFAULT_PERSONA


class TurnIn(BaseModel):
    user_input: str


class HandoffIn(BaseModel):
    model_label: str
    clear_context: bool = True


def default_client_factory(label: str) -> ModelClient:
    if label.startswith("mock"):
        return EvidenceGroundedMock(label=label)
    return HttpModelClient.from_env(label)


def create_app(engine: Engine, client_factory: Callable[[str], ModelClient] = default_client_factory) -> FastAPI:
    app = FastAPI(title="arpm")

    def session_or_404(session_id: str):
        try:
            return engine.session(session_id)
        except SessionError:
            raise HTTPException(404, f"session {session_id} is not open") from None

    @app.post("/sessions", status_code=201)
    def open_session(body: OpenSession) -> dict[str, Any]:
        try:
            s = engine.open_session(
                body.session_id,
                client_factory(body.model_label),
                user_id=body.user_id,
                character_id=body.character_id,
                persona=body.persona,
            )
        except SessionError as exc:
            raise HTTPException(409, str(exc)) from None
        except StoreError as exc:
            raise HTTPException(400, str(exc)) from None
        return {
            "session_id": s.session_id,
            "user_id": s.user_id,
            "character_id": s.character_id,
            "model_label": s.client.label,
            "next_round": engine.next_round(s),
        }

    @app.post("/sessions/{session_id}/turns")
    def run_turn(session_id: str, body: TurnIn) -> dict[str, Any]:
        session_or_404(session_id)
        if not body.user_input.strip():
            raise HTTPException(422, "user_input must be nonempty")
        return engine.run_turn(session_id, body.user_input).to_dict()

    @app.post("/sessions/{session_id}/handoff")
    def handoff(session_id: str, body: HandoffIn) -> dict[str, Any]:
        session_or_404(session_id)
        return engine.handoff(session_id, client_factory(body.model_label), body.clear_context)

    @app.get("/sessions/{session_id}/log")
    def log(session_id: str) -> dict[str, Any]:
        turns = engine.store.turns(session_id)
        events = engine.store.load_events(session_id)
        if not turns and not events:
            raise HTTPException(404, f"no log for session {session_id}")
        return {"session_id": session_id, "turns": [t.to_dict() for t in turns], "events": events}

    return app


def app_from_env() -> FastAPI:
    config = load_config(os.environ.get("ARPM_CONFIG"))
    return create_app(Engine.open(os.environ.get("ARPM_STORE", "arpm-store"), config))
