"""Generative model clients.

The engine only sees ``complete(prompt) -> str`` plus an identity label, so
vendors and mocks are interchangeable mid-session.
"""

from __future__ import annotations

import os
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from typing import Protocol

import httpx

from ..evidence import EVIDENCE_CLOSE, EVIDENCE_OPEN

UNKNOWN_MARKER = "[unknown]"
REPAIR_MARKER = "[REPAIR]"
ACK_REPLY = "Noted."


class ModelTimeout(TimeoutError):
    pass


class ModelError(RuntimeError):
    pass


class ModelClient(Protocol):
    label: str

    def complete(self, prompt: str, timeout: float | None = None) -> str: ...


@dataclass
class PromptEvidence:
    n: int
    header: str
    text: str

    def attr(self, name: str) -> str:
        m = re.search(rf"\b{name}=(\S+)", self.header)
        return m.group(1) if m else ""


def read_evidence(prompt: str) -> list[PromptEvidence]:
    """Parse the rendered evidence items back out of a prompt."""
    out = []
    pat = re.compile(rf"^{re.escape(EVIDENCE_OPEN)}(\d+) (.*?)>>$", re.MULTILINE)
    for m in pat.finditer(prompt):
        n = m.group(1)
        close = prompt.find(f"\n{EVIDENCE_CLOSE}{n}>>", m.end())
        if close < 0:
            continue
        out.append(PromptEvidence(int(n), m.group(2), prompt[m.end() + 1 : close]))
    return out


def read_query(prompt: str) -> str:
    marker = "[USER QUERY]\n"
    i = prompt.rfind(marker)
    body = prompt[i + len(marker) :] if i >= 0 else prompt
    j = body.find(REPAIR_MARKER)
    if j >= 0:
        body = body[:j]
    return body.strip()


@dataclass
class EvidenceGroundedMock:
    """Deterministic stand-in for a foundation model.

    For a query matching an answer-key pattern, it answers with the gold
    string iff some evidence item in the prompt contains that string, and
    with ``UNKNOWN_MARKER`` otherwise. Queries matching no pattern get an
    acknowledgement. ``failures`` maps 1-based turn numbers to a fault for
    that turn's first call: ``drop_analysis``, ``drop_response``,
    ``drop_both`` or ``timeout``. Repair calls (prompts carrying the repair
    instruction) do not advance the turn counter.
    """

    label: str = "mock-a"
    answer_key: list[tuple[str, str]] = field(default_factory=list)
    failures: Mapping[int, str] = field(default_factory=dict)
    never_compliant: bool = False
    turn: int = 0
    calls: int = 0

    FAULTS = ("drop_analysis", "drop_response", "drop_both", "timeout")

    def __post_init__(self) -> None:
        for t, mode in self.failures.items():
            if mode not in self.FAULTS:
                raise ValueError(f"unknown fault {mode!r} for turn {t}")
        self._compiled = [(re.compile(p, re.IGNORECASE), gold) for p, gold in self.answer_key]

    def add_answers(self, pairs: Iterable[tuple[str, str]]) -> None:
        for p, gold in pairs:
            self.answer_key.append((p, gold))
            self._compiled.append((re.compile(p, re.IGNORECASE), gold))

    def _answer(self, prompt: str) -> tuple[str, str]:
        query = read_query(prompt)
        gold = next((g for pat, g in self._compiled if pat.search(query)), None)
        if gold is None:
            return "Statement or small talk; no evidence lookup required.", ACK_REPLY
        items = read_evidence(prompt)
        hits = [it for it in items if gold in it.text]
        if not hits:
            checked = ", ".join(f"E{it.n}" for it in items) or "none"
            return f"Checked {checked}; no evidence item supports an answer.", UNKNOWN_MARKER
        # bind to the most recent supporting item (evidence is oldest-first)
        it = hits[-1]
        analysis = (
            f"Needs {it.attr('route')} evidence. E{it.n} ({it.attr('source')}, {it.attr('date')}, "
            f"{it.attr('delta')} rounds ago) supports the answer; {len(items) - len(hits)} other item(s) do not."
        )
        return analysis, gold

    def complete(self, prompt: str, timeout: float | None = None) -> str:
        self.calls += 1
        repair = REPAIR_MARKER in prompt
        if not repair:
            self.turn += 1
        fault = None if repair else self.failures.get(self.turn)
        if fault == "timeout":
            raise ModelTimeout(f"{self.label}: scripted timeout on turn {self.turn}")
        analysis, response = self._answer(prompt)
        if self.never_compliant or fault == "drop_both":
            return response
        if fault == "drop_analysis":
            return f"<response>{response}</response>"
        if fault == "drop_response":
            return f"<analysis>{analysis}</analysis>\n{response}"
        return f"<analysis>{analysis}</analysis>\n<response>{response}</response>"


class HttpModelClient:
    """Generic completion endpoint: POST {"model", "prompt"} -> {"text": ...}."""

    def __init__(
        self,
        url: str,
        label: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        client: httpx.Client | None = None,
    ) -> None:
        self.url = url
        self.label = label
        self.timeout = timeout
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(headers=headers)

    @classmethod
    def from_env(cls, label: str | None = None, timeout: float = 30.0) -> HttpModelClient:
        url = os.environ.get("ARPM_MODEL_URL")
        if not url:
            raise ModelError("ARPM_MODEL_URL is not set")
        return cls(
            url,
            label or os.environ.get("ARPM_MODEL_NAME", "http-model"),
            api_key=os.environ.get("ARPM_MODEL_KEY"),
            timeout=timeout,
        )

    def complete(self, prompt: str, timeout: float | None = None) -> str:
        try:
            resp = self._client.post(
                self.url,
                json={"model": self.label, "prompt": prompt},
                timeout=timeout if timeout is not None else self.timeout,
            )
            resp.raise_for_status()
            return str(resp.json()["text"])
        except httpx.TimeoutException as exc:
            raise ModelTimeout(f"{self.label}: {exc}") from exc
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise ModelError(f"{self.label}: completion failed: {exc}") from exc
