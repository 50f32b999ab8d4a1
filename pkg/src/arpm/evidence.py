"""Evidence assembly: per-route quotas, chronological unfolding, prompt text."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from importlib import resources

from .clock import iso_utc
from .records import ScoredCandidate
from .temporal import TemporalContext

logger = logging.getLogger(__name__)

TEMPLATE_VERSIONS = {
    "arpm-prompt-v1": "prompt_v1.txt",
    "arpm-prompt-strong-v1": "prompt_strong_v1.txt",
}
DEFAULT_TEMPLATE = "arpm-prompt-v1"
STRONG_TEMPLATE = "arpm-prompt-strong-v1"
NO_EVIDENCE = "(no retrieved evidence)"
EVIDENCE_OPEN = "<<E"
EVIDENCE_CLOSE = "<</E"


def load_template(version: str) -> str:
    name = TEMPLATE_VERSIONS[version]
    return resources.files("arpm").joinpath("templates", name).read_text(encoding="utf-8")


def merge_routes(
    knowledge: Sequence[ScoredCandidate],
    experience: Sequence[ScoredCandidate],
    knowledge_k: int,
    chat_history_k: int,
) -> list[ScoredCandidate]:
    """Take each route's own top slice; routes never compete for slots."""
    out: list[ScoredCandidate] = []
    seen: set[str] = set()
    for cands, quota in ((knowledge, knowledge_k), (experience, chat_history_k)):
        taken = 0
        for c in cands:
            if taken >= quota:
                break
            if c.key in seen:
                continue
            seen.add(c.key)
            out.append(c)
            taken += 1
    return out


@dataclass
class EvidenceItem:
    candidate: ScoredCandidate
    source_label: str
    date: str
    rounds_ago: int


@dataclass
class EvidenceBlock:
    items: list[EvidenceItem]
    current_round: int
    header_ts: float | None
    quotas: dict[str, int] = field(default_factory=dict)

    @property
    def header_date(self) -> str:
        return iso_utc(self.header_ts) if self.header_ts is not None else "n/a"

    @property
    def candidates(self) -> list[ScoredCandidate]:
        return [it.candidate for it in self.items]


def chronological_key(c: ScoredCandidate) -> tuple[float, int, str]:
    return (c.timestamp, c.round, c.chunk_id)


def unfold_chronologically(
    candidates: Sequence[ScoredCandidate],
    ctx: TemporalContext,
    last_turn_ts: float | None = None,
    quotas: dict[str, int] | None = None,
) -> EvidenceBlock:
    """Order evidence oldest-first and annotate each item with date and round delta.

    The header timestamp is the latest of the evidence timestamps and the
    session's most recent turn.
    """
    ordered = sorted(candidates, key=chronological_key)
    items = [
        EvidenceItem(
            candidate=c,
            source_label=c.source_label,
            date=iso_utc(c.timestamp),
            rounds_ago=ctx.r_current - c.round,
        )
        for c in ordered
    ]
    stamps = [c.timestamp for c in ordered]
    if last_turn_ts is not None:
        stamps.append(last_turn_ts)
    return EvidenceBlock(items, ctx.r_current, max(stamps) if stamps else None, dict(quotas or {}))


def render_item(n: int, item: EvidenceItem) -> str:
    c = item.candidate
    head = (
        f"{EVIDENCE_OPEN}{n} id={c.key} route={c.route} source={item.source_label} "
        f"date={item.date} round={c.round} delta={item.rounds_ago} rounds ago>>"
    )
    return f"{head}\n{c.text}\n{EVIDENCE_CLOSE}{n}>>"


def render_window(turns: Sequence[tuple[int, str, str]]) -> str:
    if not turns:
        return "(none)"
    lines = []
    for rnd, user, reply in turns:
        lines.append(f"Round {rnd} User: {user}")
        lines.append(f"Round {rnd} Assistant: {reply}")
    return "\n".join(lines)


@dataclass
class BuiltPrompt:
    text: str
    evidence: EvidenceBlock
    truncations: int
    template_version: str


def build_prompt(
    evidence: EvidenceBlock,
    persona: str,
    query: str,
    window: Sequence[tuple[int, str, str]] = (),
    budget_chars: int = 12000,
    template_version: str = DEFAULT_TEMPLATE,
) -> BuiltPrompt:
    """Fill the versioned template; over budget, drop evidence oldest-first."""
    template = load_template(template_version)
    items = list(evidence.items)
    truncations = 0

    def render(its: list[EvidenceItem]) -> str:
        body = "\n".join(render_item(i, it) for i, it in enumerate(its, start=1)) if its else NO_EVIDENCE
        return template.format(
            persona=persona,
            current_round=evidence.current_round,
            header_date=evidence.header_date,
            evidence=body,
            window=render_window(window),
            query=query,
        )

    text = render(items)
    while len(text) > budget_chars and items:
        items.pop(0)
        truncations += 1
        text = render(items)
    if truncations:
        logger.info("prompt over budget: dropped %d oldest evidence item(s)", truncations)
    kept = EvidenceBlock(items, evidence.current_round, evidence.header_ts, evidence.quotas)
    return BuiltPrompt(text, kept, truncations, template_version)

