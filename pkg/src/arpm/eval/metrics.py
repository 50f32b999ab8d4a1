"""Per-round correctness flags, manual overrides, and rolling accuracy curves."""

from __future__ import annotations

import csv
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any


class MetricsError(ValueError):
    pass


@dataclass
class EvalRecord:
    """One scripted QA round.

    ``manual_support`` and ``answer_correct`` are ``None`` until a reviewer
    override sets them; ``None`` reads as "unknown" and counts as 0.
    """

    round: int
    question: str
    gold_chunk_id: str
    gold_answer: str
    response: str = ""
    top1_chunk_id: str | None = None
    evidence_in_prompt: bool = False
    auto_correct: int = 0
    manual_support: int | None = None
    answer_correct: int | None = None
    excluded: bool = False

    @property
    def final_correct(self) -> int:
        return int(self.manual_support == 1 and self.answer_correct == 1)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["final_correct"] = self.final_correct
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EvalRecord:
        d = {k: v for k, v in d.items() if k != "final_correct"}
        return cls(**d)


def rolling_accuracy(flags: Sequence[int]) -> list[float]:
    """Prefix means: point r is the fraction of ones among the first r flags."""
    if not flags:
        raise MetricsError("rolling accuracy needs at least one flag")
    out = []
    total = 0
    for r, f in enumerate(flags, start=1):
        if f not in (0, 1):
            raise MetricsError(f"flag at round {r} must be 0 or 1, got {f!r}")
        total += f
        out.append(total / r)
    return out


def auto_rolling_accuracy(records: Sequence[EvalRecord]) -> list[float]:
    return rolling_accuracy([r.auto_correct for r in records])


def manual_rolling_accuracy(records: Sequence[EvalRecord]) -> list[float]:
    return rolling_accuracy([r.final_correct for r in records])


_UNKNOWN = {"", "unknown", "?", "na", "n/a", "pending"}


def _tri(value: str, where: str) -> int | None:
    v = value.strip().lower()
    if v in _UNKNOWN:
        return None
    if v in ("0", "1"):
        return int(v)
    raise MetricsError(f"{where}: expected 0, 1 or unknown, got {value!r}")


def read_overrides(path: str | Path) -> dict[int, tuple[int | None, int | None]]:
    """Parse a ``round,manual_support,answer_correct`` CSV."""
    out: dict[int, tuple[int | None, int | None]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"round", "manual_support", "answer_correct"} - set(reader.fieldnames or ())
        if missing:
            raise MetricsError(f"{path}: missing column(s) {sorted(missing)}")
        for line_no, row in enumerate(reader, start=2):
            where = f"{path}:{line_no}"
            try:
                rnd = int(row["round"])
            except ValueError:
                raise MetricsError(f"{where}: bad round {row['round']!r}") from None
            out[rnd] = (_tri(row["manual_support"], where), _tri(row["answer_correct"], where))
    return out


def apply_overrides(records: Sequence[EvalRecord], overrides: dict[int, tuple[int | None, int | None]]) -> None:
    """Set reviewer judgements in place; rounds without an override stay unknown."""
    by_round = {r.round: r for r in records}
    for rnd in overrides:
        if rnd not in by_round:
            raise MetricsError(f"override for round {rnd} is outside 1..{len(records)}")
    for rnd, (support, answer) in overrides.items():
        by_round[rnd].manual_support = support
        by_round[rnd].answer_correct = answer


def records_from_flags(
    auto: Sequence[int],
    overrides: dict[int, tuple[int | None, int | None]] | None = None,
) -> list[EvalRecord]:
    """Bare records carrying only correctness flags, e.g. for replaying a review sheet."""
    records = [EvalRecord(i, "", "", "", auto_correct=f) for i, f in enumerate(auto, start=1)]
    if overrides:
        apply_overrides(records, overrides)
    return records
