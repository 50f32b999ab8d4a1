from __future__ import annotations

import json

import pytest

from arpm.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


def lines(out):
    return [json.loads(line) for line in out.splitlines() if line.startswith("{")]


@pytest.fixture
def store(tmp_path):
    return tmp_path / "store"


STORE = lambda s: ["--store", s, "--clock", "scripted"]  # noqa: E731


class TestCli:
    def test_ingest_ask_handoff_replay(self, tmp_path, store, capsys):
        doc = tmp_path / "keeper.txt"
        doc.write_text("The lighthouse keeper on Gull Island is named Ansel Varga.", encoding="utf-8")
        answers = tmp_path / "answers.json"
        answers.write_text(json.dumps([{"pattern": "lighthouse keeper", "answer": "Ansel Varga"}]), encoding="utf-8")
        code, out = run(capsys, "ingest", *STORE(store), doc)
        assert code == 0 and lines(out) == [{"parents": 1, "children": 1}]

        sess = ["--session", "s1", "--user", "alice", "--character", "mori", "--answers", answers]
        code, out = run(capsys, "ask", *STORE(store), *sess, "Who is the lighthouse keeper?")
        assert code == 0 and lines(out)[0]["reply"] == "Ansel Varga"

        code, out = run(capsys, "handoff", *STORE(store), *sess, "--to", "mock-b")
        assert lines(out)[0]["new_label"] == "mock-b"

        code, out = run(capsys, "ask", *STORE(store), *sess, "--full", "Who is the lighthouse keeper again?")
        rec = lines(out)[0]
        assert rec["model_label"] == "mock-b" and rec["round"] == 2

        code, out = run(capsys, "replay", *STORE(store), *sess, "--upto", 1, "--query", "lighthouse keeper?")
        got = lines(out)
        assert [g.get("round") for g in got] == [1, 2]
        assert "kb:keeper:p0000" in got[-1]["evidence"]

    def test_session_script(self, tmp_path, store, capsys):
        script = tmp_path / "script.json"
        script.write_text(json.dumps(["hello", {"handoff": "mock-b"}, {"input": "again"}]), encoding="utf-8")
        code, out = run(capsys, "session", "run", *STORE(store), "--session", "s2", "--script", script)
        got = lines(out)
        assert code == 0 and [g.get("round") for g in got] == [1, None, 2]

    def test_eval_pipeline(self, tmp_path, capsys):
        corpus, records, turns, reports = (tmp_path / n for n in ("corpus", "rec.jsonl", "turns.jsonl", "reports"))
        code, out = run(capsys, "eval", "synth", "--gold", 3, "--ratio", 2, "--out", corpus)
        assert lines(out)[0]["documents"] == 9
        code, out = run(capsys, "eval", "run", "--corpus", corpus, "--out", records, "--turn-log", turns)
        assert lines(out)[0]["rounds"] == 3
        overrides = tmp_path / "o.csv"
        overrides.write_text("round,manual_support,answer_correct\n1,1,1\n", encoding="utf-8")
        code, out = run(capsys, "eval", "export", "--records", f"a={records}", "--overrides", f"a={overrides}", "--logs", turns, "--out", reports)
        assert code == 0
        assert (reports / "curve_a.csv").read_text().splitlines()[0] == "round,auto_rolling,manual_rolling"
        code, out = run(capsys, "eval", "stats", turns)
        assert out.splitlines()[1].startswith("mock-a,3,")

    def test_ablate(self, capsys):
        code, out = run(capsys, "eval", "ablate", "--json")
        assert code == 0 and [r["setting"] for r in lines(out)][0] == "full"

    def test_errors_exit_2(self, tmp_path, store, capsys):
        assert main(["ingest", "--store", str(store), str(tmp_path / "missing.txt")]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"no_such_key": 1}), encoding="utf-8")
        assert main(["ask", "--store", str(store), "--config", str(bad), "--session", "s", "hi"]) == 2
        assert "error" in capsys.readouterr().err
