"""The <analysis>/<response> output protocol and its bounded repair loop."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..records import ComplianceReport
from .clients import REPAIR_MARKER, ModelClient

REPAIR_INSTRUCTION = (
    f"\n\n{REPAIR_MARKER}\nYour previous answer did not follow the output protocol. "
    "Answer again with exactly <analysis>...</analysis> followed by <response>...</response>."
)

_ANALYSIS = re.compile(r"<analysis>(.*?)</analysis>", re.DOTALL)
_RESPONSE = re.compile(r"<response>(.*?)</response>", re.DOTALL)


@dataclass
class ParsedResponse:
    analysis: str | None
    response: str
    report: ComplianceReport


def parse_tagged_response(raw: str) -> ParsedResponse:
    """Extract the first well-formed analysis and response spans.

    Missing or malformed tags are reported, never raised. Without a
    response span the whole raw text is returned as the response.
    """
    a = _ANALYSIS.search(raw)
    r = _RESPONSE.search(raw)
    analysis = a.group(1).strip() if a else None
    response = r.group(1).strip() if r else raw.strip()
    report = ComplianceReport(
        has_analysis_tag=a is not None,
        has_response_tag=r is not None,
        analysis_length_chars=len(analysis) if analysis is not None else 0,
    )
    return ParsedResponse(analysis, response, report)


def repair_loop(prompt: str, client: ModelClient, max_repairs: int = 2, timeout: float | None = None) -> tuple[str, ParsedResponse]:
    """Call the model until both tags are present or repairs run out.

    Timeouts from the client propagate to the caller. The returned report
    carries the final tag flags, the repair count, and the first answer's
    tag flags.
    """
    if max_repairs < 0:
        raise ValueError("max_repairs must be >= 0")
    raw = client.complete(prompt, timeout=timeout)
    parsed = parse_tagged_response(raw)
    initial = (parsed.report.has_analysis_tag, parsed.report.has_response_tag)
    repairs = 0
    while not parsed.report.compliant and repairs < max_repairs:
        repairs += 1
        raw = client.complete(prompt + REPAIR_INSTRUCTION, timeout=timeout)
        parsed = parse_tagged_response(raw)
    parsed.report.repair_count = repairs
    parsed.report.initial_has_analysis, parsed.report.initial_has_response = initial
    return raw, parsed
