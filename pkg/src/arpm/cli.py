"""Command line interface: ``arpm <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .clock import Clock, ScriptedClock, WallClock
from .config import ConfigError, EngineConfig, load_config
from .memory_store import DocumentMeta, MemoryStore, StoreError
from .orchestrator.clients import EvidenceGroundedMock, HttpModelClient, ModelClient, ModelError
from .orchestrator.engine import Engine, SessionError

log = logging.getLogger("arpm")


# ---- helpers -----------------------------------------------------------------


def _config(args: argparse.Namespace) -> EngineConfig:
    return load_config(getattr(args, "config", None))


def _clock(args: argparse.Namespace, store_root: str | None) -> Clock:
    if getattr(args, "clock", "wall") == "wall":
        return WallClock()
    # continue after the latest recorded timestamp so rounds stay ordered in time
    start = args.clock_start
    if store_root is not None and start is None:
        probe = MemoryStore(store_root, _NullEmbedder())
        stamps = [c.timestamp for c in probe.experience_chunks] + [p.timestamp for p in probe.parents.values()]
        start = max(stamps) + 3600 if stamps else None
    return ScriptedClock(start=start if start is not None else 1_767_225_600.0, step=3600)


class _NullEmbedder:
    """Embedder stand-in for metadata-only store reads."""

    dim = 1

    def embed(self, text: str) -> np.ndarray:
        return np.zeros(1)


def _client(label: str, answers: str | None) -> ModelClient:
    if label.startswith("mock"):
        mock = EvidenceGroundedMock(label=label)
        if answers:
            data = json.loads(Path(answers).read_text(encoding="utf-8"))
            mock.add_answers((d["pattern"], d["answer"]) for d in data)
        return mock
    return HttpModelClient.from_env(label)


def _engine(args: argparse.Namespace) -> Engine:
    config = _config(args)
    return Engine.open(args.store, config, clock=_clock(args, args.store))


def _emit(obj: Any) -> None:
    sys.stdout.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def _open(engine: Engine, args: argparse.Namespace):
    return engine.open_session(
        args.session,
        _client(args.model, args.answers),
        user_id=args.user,
        character_id=args.character,
    )


def _current_label(engine: Engine, session_id: str, fallback: str) -> str:
    label = fallback
    for e in engine.store.load_events(session_id):
        if e.get("event") == "handoff":
            label = e["new_label"]
    return label


def _read_docs(paths: Sequence[str]) -> list[tuple[str, DocumentMeta]]:
    docs = []
    for p in map(Path, paths):
        if p.suffix == ".jsonl":
            with open(p, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        d = json.loads(line)
                        docs.append((d["text"], DocumentMeta(doc_id=d.get("doc_id"), source_label=d.get("source_label", ""))))
        else:
            docs.append((p.read_text(encoding="utf-8"), DocumentMeta(doc_id=p.stem, source_label=p.name)))
    return docs


# ---- commands ----------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    engine = _engine(args)
    chunks = engine.ingest_many(_read_docs(args.files))
    parents = sum(c.parent_id is None for c in chunks)
    _emit({"parents": parents, "children": len(chunks) - parents})
    return 0


def _turn_summary(rec) -> dict[str, Any]:
    return {
        "round": rec.round,
        "reply": rec.assistant_reply,
        "evidence": [c.key for c in rec.candidates],
        "compliant": rec.compliance.compliant,
        "repairs": rec.compliance.repair_count,
        "anomaly": rec.compliance.external_anomaly,
    }


def cmd_ask(args: argparse.Namespace) -> int:
    engine = _engine(args)
    args.model = _current_label(engine, args.session, args.model)
    _open(engine, args)
    rec = engine.run_turn(args.session, args.text)
    _emit(rec.to_dict() if args.full else _turn_summary(rec))
    return 0


def cmd_session_run(args: argparse.Namespace) -> int:
    engine = _engine(args)
    args.model = _current_label(engine, args.session, args.model)
    _open(engine, args)
    script = json.loads(Path(args.script).read_text(encoding="utf-8"))
    for step in script:
        if isinstance(step, str):
            step = {"input": step}
        if "handoff" in step:
            engine.handoff(args.session, _client(step["handoff"], args.answers), step.get("clear_context", True))
            _emit({"handoff": step["handoff"]})
            continue
        rec = engine.run_turn(args.session, step["input"])
        _emit(rec.to_dict() if args.full else _turn_summary(rec))
    return 0


def cmd_handoff(args: argparse.Namespace) -> int:
    engine = _engine(args)
    args.model = _current_label(engine, args.session, args.model)
    _open(engine, args)
    _emit(engine.handoff(args.session, _client(args.to, args.answers), clear_context=not args.keep_context))
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    engine = _engine(args)
    records = engine.store.load_session(args.session)
    upto = args.upto if args.upto is not None else (records[-1].round if records else 0)
    for rec in records:
        if rec.round <= upto:
            _emit(_turn_summary(rec))
    if args.query:
        label = _current_label(engine, args.session, args.model)
        _open(engine, argparse.Namespace(**{**vars(args), "model": label}))
        clone = engine.replay({args.session: upto})
        now = args.now if args.now is not None else (records[upto - 1].timestamp + 3600 if upto else engine.clock())
        built = clone.preview(args.session, args.query, now=now, r_current=upto + 1)
        _emit({"round": upto + 1, "evidence": [c.key for c in built.evidence.candidates], "truncations": built.truncations})
        if args.show_prompt:
            sys.stdout.write(built.text + "\n")
    return 0


def cmd_eval_synth(args: argparse.Namespace) -> int:
    from .eval.corpus import NoiseSpec, synthesize_corpus

    source = Path(args.noise_source).read_text(encoding="utf-8") if args.noise_source else None
    corpus = synthesize_corpus(NoiseSpec(args.gold, args.ratio, args.seed), source)
    corpus.write(args.out)
    _emit({"documents": len(corpus.documents), "questions": len(corpus.questions), "out": args.out})
    return 0


def cmd_eval_run(args: argparse.Namespace) -> int:
    from .eval.corpus import Corpus, NoiseSpec, read_script, synthesize_corpus
    from .eval.qa import run_qa

    config = _config(args)
    if args.corpus:
        corpus = Corpus.read(args.corpus)
    else:
        corpus = synthesize_corpus(NoiseSpec(args.gold, args.ratio, args.seed))
    questions = read_script(args.questions) if args.questions else corpus.questions
    engine = Engine.open(args.store, config, clock=ScriptedClock())
    engine.ingest_many(corpus.metas())
    engine.open_session(args.session, _client(args.model, None))
    records, turns = run_qa(engine, args.session, questions)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    if args.turn_log:
        with open(args.turn_log, "wb") as fh:
            for t in turns:
                fh.write(t.to_json_line())
    n = len(records)
    _emit(
        {
            "rounds": n,
            "auto_correct": sum(r.auto_correct for r in records),
            "evidence_in_prompt": sum(r.evidence_in_prompt for r in records),
            "records": str(out),
        }
    )
    return 0


def cmd_eval_ablate(args: argparse.Namespace) -> int:
    from .eval.ablation import format_table, run_ablation

    rows = run_ablation(base_config=_config(args))
    if args.json:
        for r in rows:
            _emit(r.to_dict())
    else:
        sys.stdout.write(format_table(rows) + "\n")
    return 0


def _read_turns(paths: Sequence[str]):
    from .memory_store import JsonlLog
    from .records import TurnRecord

    out = []
    for p in paths:
        out.extend(TurnRecord.from_dict(d) for d in JsonlLog.read(p))
    return out


def cmd_eval_stats(args: argparse.Namespace) -> int:
    from .eval.stats import STATS_COLUMNS, protocol_stats

    rows = protocol_stats(_read_turns(args.logs))
    sys.stdout.write(",".join(STATS_COLUMNS) + "\n")
    for r in rows:
        d = r.to_dict()
        d["mean_analysis_length_chars"] = f"{d['mean_analysis_length_chars']:.3f}"
        sys.stdout.write(",".join(str(d[c]) for c in STATS_COLUMNS) + "\n")
    return 0


def _named(spec: str) -> tuple[str, str]:
    name, sep, path = spec.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {spec!r}")
    return name, path


def cmd_eval_export(args: argparse.Namespace) -> int:
    from .eval.metrics import EvalRecord, apply_overrides, read_overrides
    from .eval.reports import export_reports
    from .eval.stats import protocol_stats

    runs = {}
    for name, path in args.records:
        with open(path, encoding="utf-8") as fh:
            runs[name] = [EvalRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
    for name, path in args.overrides or []:
        if name not in runs:
            raise SystemExit(f"overrides given for unknown run {name!r}")
        apply_overrides(runs[name], read_overrides(path))
    stats = protocol_stats(_read_turns(args.logs or []))
    paths = export_reports(args.out, runs, stats, extra={"seed": args.seed})
    _emit({"written": [str(p) for p in paths]})
    return 0


# ---- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arpm", description="External temporal memory engine for dialogue.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def store_opts(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--store", default="arpm-store", help="store directory")
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--clock", choices=("wall", "scripted"), default="wall")
        sp.add_argument("--clock-start", type=float, default=None, help="first scripted timestamp")

    def session_opts(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--session", required=True)
        sp.add_argument("--user", default="user")
        sp.add_argument("--character", default="assistant")
        sp.add_argument("--model", default="mock-a", help="model label; 'mock*' uses the offline mock")
        sp.add_argument("--answers", help="JSON list of {pattern, answer} for the mock")

    sp = sub.add_parser("ingest", help="add documents to knowledge memory")
    store_opts(sp)
    sp.add_argument("files", nargs="+", help=".txt files, or .jsonl with doc_id/text per line")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("ask", help="run one turn")
    store_opts(sp)
    session_opts(sp)
    sp.add_argument("text")
    sp.add_argument("--full", action="store_true", help="print the whole turn record")
    sp.set_defaults(func=cmd_ask)

    sp = sub.add_parser("session", help="scripted multi-turn sessions")
    ssub = sp.add_subparsers(dest="session_command", required=True)
    rp = ssub.add_parser("run", help="run a JSON script of inputs (and handoffs)")
    store_opts(rp)
    session_opts(rp)
    rp.add_argument("--script", required=True)
    rp.add_argument("--full", action="store_true")
    rp.set_defaults(func=cmd_session_run)

    sp = sub.add_parser("handoff", help="switch a session to another model")
    store_opts(sp)
    session_opts(sp)
    sp.add_argument("--to", required=True, help="new model label")
    sp.add_argument("--keep-context", action="store_true", help="keep the in-window dialogue history")
    sp.set_defaults(func=cmd_handoff)

    sp = sub.add_parser("replay", help="show a session's log; optionally re-ask after a prefix")
    store_opts(sp)
    session_opts(sp)
    sp.add_argument("--upto", type=int, default=None, help="last round to include")
    sp.add_argument("--query", help="preview retrieval for this input after the prefix")
    sp.add_argument("--now", type=float, default=None)
    sp.add_argument("--show-prompt", action="store_true")
    sp.set_defaults(func=cmd_replay)

    ep = sub.add_parser("eval", help="experiments and reports")
    esub = ep.add_subparsers(dest="eval_command", required=True)

    def eval_opts(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--seed", type=int, default=7)
        sp.add_argument("--config", help="JSON config file")

    sp = esub.add_parser("synth", help="write a seeded noise corpus and question script")
    eval_opts(sp)
    sp.add_argument("--gold", type=int, default=50)
    sp.add_argument("--ratio", type=int, default=200)
    sp.add_argument("--noise-source", help="text file to sample noise n-grams from")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_eval_synth)

    sp = esub.add_parser("run", help="run the scripted QA and write per-round records")
    eval_opts(sp)
    sp.add_argument("--corpus", help="directory written by 'eval synth'")
    sp.add_argument("--questions", help="question script (defaults to the corpus's)")
    sp.add_argument("--gold", type=int, default=50)
    sp.add_argument("--ratio", type=int, default=5)
    sp.add_argument("--store", default=None, help="persist the run's store here")
    sp.add_argument("--session", default="qa")
    sp.add_argument("--model", default="mock-a")
    sp.add_argument("--out", required=True, help="records JSONL")
    sp.add_argument("--turn-log", help="also write the turn records here")
    sp.set_defaults(func=cmd_eval_run)

    sp = esub.add_parser("ablate", help="run the toggle matrix on the built-in suite")
    eval_opts(sp)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_eval_ablate)

    sp = esub.add_parser("stats", help="protocol statistics from turn logs")
    eval_opts(sp)
    sp.add_argument("logs", nargs="+")
    sp.set_defaults(func=cmd_eval_stats)

    sp = esub.add_parser("export", help="curves CSV, summary JSON, plot data, stats CSV")
    eval_opts(sp)
    sp.add_argument("--records", type=_named, action="append", required=True, metavar="NAME=PATH")
    sp.add_argument("--overrides", type=_named, action="append", metavar="NAME=CSV")
    sp.add_argument("--logs", nargs="*", help="turn logs for the stats table")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_eval_export)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, StoreError, SessionError, ModelError, FileNotFoundError, ValueError) as exc:
        sys.stderr.write(f"arpm: error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
