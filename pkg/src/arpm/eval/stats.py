"""Output-protocol behaviour per model identity."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import asdict, dataclass
from typing import Any

from ..records import TurnRecord


@dataclass
class ProtocolStats:
    model_label: str
    turns: int = 0
    mean_analysis_length_chars: float = 0.0
    missing_analysis: int = 0
    missing_response: int = 0
    repair_triggers: int = 0
    anomaly_excluded: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


STATS_COLUMNS = tuple(ProtocolStats.__dataclass_fields__)


def protocol_stats(records: Iterable[TurnRecord]) -> list[ProtocolStats]:
    """Aggregate tag compliance by model label, sorted by label.

    Missing-tag counts look at each turn's first answer, before repair.
    ``repair_triggers`` is the total number of repair re-prompts. Turns
    with an external anomaly (timeout, transport error) are counted apart
    and left out of every other column.
    """
    rows: dict[str, ProtocolStats] = {}
    lengths: dict[str, list[int]] = {}
    for rec in records:
        row = rows.setdefault(rec.model_label, ProtocolStats(rec.model_label))
        lens = lengths.setdefault(rec.model_label, [])
        rep = rec.compliance
        if rep.external_anomaly is not None:
            row.anomaly_excluded += 1
            continue
        row.turns += 1
        row.missing_analysis += not rep.initial_has_analysis
        row.missing_response += not rep.initial_has_response
        row.repair_triggers += rep.repair_count
        lens.append(rep.analysis_length_chars)
    for label, row in rows.items():
        lens = lengths[label]
        row.mean_analysis_length_chars = sum(lens) / len(lens) if lens else 0.0
    return [rows[k] for k in sorted(rows)]
