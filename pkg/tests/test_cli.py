import json
import subprocess
import sys

import pytest

from kpimportance.cli import main


def _run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def corpus(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_docs": 12, "min_len": 20, "max_len": 30, "seed": 1}))
    path = tmp_path / "corpus.jsonl"
    assert main(["synth-data", "--spec", str(spec), "--out", str(path)]) == 0
    return path


def test_synth_data(corpus):
    assert len(corpus.read_text().splitlines()) == 12


def test_train_extract_eval(tmp_path, corpus, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train_data": corpus.name, "d": 8, "c": 4, "epochs": 2,
                               "batch_size": 4, "max_n": 3, "learning_rate": 1e-2}))
    run = tmp_path / "run"
    code, out, _ = _run(["train", "--config", cfg, "--seed", 3, "--out", run], capsys)
    assert code == 0
    summary = json.loads(out)
    assert summary["epochs"] == 2 and summary["steps"] == 6
    assert json.loads((run / "config.json").read_text())["seed"] == 3

    pred = tmp_path / "pred.jsonl"
    code, _, _ = _run(["extract", "--model", run / "model.json", "--input", corpus,
                       "--topk", 4, "--out", pred], capsys)
    assert code == 0
    rows = [json.loads(line) for line in pred.read_text().splitlines()]
    assert len(rows) == 12
    assert set(rows[0]) == {"id", "keyphrases", "scores"}
    assert len(rows[0]["keyphrases"]) == 4 and rows[0]["scores"] == sorted(rows[0]["scores"], reverse=True)

    for fmt, check in (("table", lambda s: "F1@k" in s), ("csv", lambda s: s.startswith("k,")),
                       ("json", lambda s: json.loads(s)["n_docs"] == 12)):
        code, out, _ = _run(["eval", "--pred", pred, "--gold", corpus, "--ks", "1,3,5,10",
                             "--format", fmt], capsys)
        assert code == 0 and check(out)


def test_baseline_tfidf(tmp_path, corpus, capsys):
    out = tmp_path / "tfidf.jsonl"
    code, _, _ = _run(["baseline-tfidf", "--input", corpus, "--topk", 3, "--out", out], capsys)
    assert code == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(rows) == 12 and all(len(r["keyphrases"]) == 3 for r in rows)


def test_gradcheck_subcommand(capsys):
    code, out, _ = _run(["gradcheck", "--points", 1], capsys)
    assert code == 0
    assert out.count(" ok") == 10


def test_errors_are_single_json_lines(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "text": "x", "keyphrases": []}\nnot json\n')
    code, _, err = _run(["baseline-tfidf", "--input", bad, "--topk", 3, "--out", tmp_path / "o"], capsys)
    assert code != 0
    lines = err.strip().splitlines()
    assert len(lines) == 1 and "line 2" in json.loads(lines[0])["message"]

    code, _, err = _run(["extract", "--model", tmp_path / "missing.json", "--input", bad,
                         "--out", tmp_path / "o"], capsys)
    assert code != 0 and json.loads(err)["error"] == "LoadError"

    pred = tmp_path / "p.jsonl"
    pred.write_text('{"id": "zz", "keyphrases": ["x"]}\n')
    gold = tmp_path / "g.jsonl"
    gold.write_text('{"id": "a", "keyphrases": ["x"]}\n')
    code, _, err = _run(["eval", "--pred", pred, "--gold", gold], capsys)
    assert code != 0 and "zz" in json.loads(err)["message"]

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"eps1": 0.9}))
    code, _, err = _run(["train", "--config", cfg], capsys)
    assert code != 0 and json.loads(err)["error"] == "ConfigError"


def test_console_entry_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "kpimportance.cli", "eval", "--pred", str(tmp_path / "none"),
                           "--gold", str(tmp_path / "none")], capture_output=True, text=True)
    assert proc.returncode == 1
    assert json.loads(proc.stderr)["error"] == "FileNotFoundError"
