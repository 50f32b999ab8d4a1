"""Byte-stable CSV/JSON exports of curves, summaries and protocol statistics."""

from __future__ import annotations

import csv
import io
import json
import os
import re
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

from .metrics import EvalRecord, auto_rolling_accuracy, manual_rolling_accuracy
from .stats import STATS_COLUMNS, ProtocolStats

_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class ReportError(OSError):
    pass


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def curve_rows(records: Sequence[EvalRecord]) -> list[tuple[int, str, str]]:
    auto = auto_rolling_accuracy(records)
    manual = manual_rolling_accuracy(records)
    return [(r.round, f"{a:.3f}", f"{m:.3f}") for r, a, m in zip(records, auto, manual)]


def summarize(records: Sequence[EvalRecord]) -> dict[str, Any]:
    n = len(records)
    auto = sum(r.auto_correct for r in records)
    final = sum(r.final_correct for r in records)
    return {
        "rounds": n,
        "auto_correct": auto,
        "final_correct": final,
        "auto_accuracy": round(auto / n, 6) if n else None,
        "manual_accuracy": round(final / n, 6) if n else None,
        "evidence_in_prompt": sum(r.evidence_in_prompt for r in records),
        "corrected_0_to_1": sum(r.auto_correct == 0 and r.final_correct == 1 for r in records),
        "corrected_1_to_0": sum(r.auto_correct == 1 and r.final_correct == 0 for r in records),
        "pending_review": sum(r.manual_support is None or r.answer_correct is None for r in records),
        "excluded": sum(r.excluded for r in records),
    }


def export_reports(
    out_dir: str | Path,
    runs: Mapping[str, Sequence[EvalRecord]],
    stats: Sequence[ProtocolStats] = (),
    extra: Mapping[str, Any] | None = None,
) -> list[Path]:
    """Write one curve CSV per run, a summary JSON, plot data and a stats CSV.

    Output depends only on the arguments, so identical inputs give
    identical bytes. Returns the written paths.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create report directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ReportError(f"report directory {out} is not writable")

    files: dict[str, str] = {}
    summary: dict[str, Any] = {"runs": {}}
    plot: dict[str, Any] = {"series": {}}
    for name in sorted(runs):
        if not _NAME.match(name):
            raise ReportError(f"bad run name {name!r}")
        records = runs[name]
        rows = curve_rows(records) if records else []
        files[f"curve_{name}.csv"] = _csv_text(("round", "auto_rolling", "manual_rolling"), rows)
        summary["runs"][name] = summarize(records)
        plot["series"][name] = {
            "round": [r[0] for r in rows],
            "auto_rolling": [float(r[1]) for r in rows],
            "manual_rolling": [float(r[2]) for r in rows],
        }
    if extra:
        summary["extra"] = dict(extra)
    files["summary.json"] = _json_text(summary)
    files["plot_data.json"] = _json_text(plot)
    stat_rows = []
    for s in stats:
        d = s.to_dict()
        d["mean_analysis_length_chars"] = f"{d['mean_analysis_length_chars']:.3f}"
        stat_rows.append([d[c] for c in STATS_COLUMNS])
    files["protocol_stats.csv"] = _csv_text(STATS_COLUMNS, stat_rows)

    written = []
    for fname in sorted(files):
        path = out / fname
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(files[fname])
        except OSError as exc:
            raise ReportError(f"cannot write {path}: {exc}") from exc
        written.append(path)
    return written
