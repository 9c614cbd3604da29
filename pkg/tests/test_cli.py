import configparser
import json
import shutil
import subprocess

import pytest

from evicoevo.cli import main


@pytest.fixture
def run_args(fixtures_dir, tmp_path):
    out = tmp_path / "run"
    return out, [
        "--backend", "scripted",
        "--script_path", str(fixtures_dir / "script.jsonl"),
        "--video-manifest-path", str(fixtures_dir / "videos.jsonl"),
        "--seed", "7",
        "--output-dir", str(out),
        "--units-per-video", "4",
    ]


def test_config_dump_defaults(capsys):
    assert main(["config", "--dump"]) == 0
    parser = configparser.ConfigParser()
    parser.read_string(capsys.readouterr().out)
    assert parser["engine"]["iterations"] == "5"
    assert parser["backend"]["kind"] == "scripted"


def test_flags_before_and_after_subcommand(capsys, tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[engine]\nseed = 3\nalpha = 0.25\n")
    assert main(["--config", str(cfg), "config", "--dump", "--seed", "11"]) == 0
    parser = configparser.ConfigParser()
    parser.read_string(capsys.readouterr().out)
    assert parser["engine"]["seed"] == "11" and parser["engine"]["alpha"] == "0.25"
    assert main(["--seed", "12", "config", "--dump"]) == 0
    assert "seed = 12" in capsys.readouterr().out


def test_iterate(run_args, capsys):
    out, args = run_args
    assert main([*args, "iterate", "--iterations", "1"]) == 0
    state = json.loads(capsys.readouterr().out)
    assert state["iteration"] == 1 and state["phase"] == "done"
    assert (out / "batches" / "solver_001.jsonl").exists()


def test_phase_commands(run_args, capsys):
    out, args = run_args
    assert main([*args, "generate"]) == 2
    for cmd in ["score-questions", "generate", "pseudo-label", "solver-score", "emit-batch"]:
        assert main([*args, cmd]) == 0, cmd
    assert json.loads((out / "state.json").read_text())["iteration"] == 1
    assert main([*args, "score-questions"]) == 0
    state = json.loads((out / "state.json").read_text())
    assert (state["iteration"], state["phase"]) == (1, "data-gen")


def test_engine_error_exit_code(tmp_path, capsys):
    assert main(["--output-dir", str(tmp_path), "iterate"]) == 1
    assert "script_path" in capsys.readouterr().err


def test_evaluate(tmp_path, capsys):
    preds = tmp_path / "p.jsonl"
    gt = tmp_path / "g.jsonl"
    preds.write_text(json.dumps({"question_id": "q1", "answer": "A", "span": [2, 6]}) + "\n")
    gt.write_text(json.dumps({"question_id": "q1", "answer": "A", "span": [4, 8], "duration_s": 10}) + "\n")
    report_path = tmp_path / "r.json"
    assert main(["evaluate", "--predictions", str(preds), "--ground-truth", str(gt), "--report", str(report_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["mIoU"] == pytest.approx(1 / 3) and report["GQA@0.3"] == 1.0
    assert json.loads(report_path.read_text()) == report


def test_analyze_evidence(tmp_path, capsys):
    oracle = tmp_path / "oracle.jsonl"
    gt = tmp_path / "gt.jsonl"
    rows = [("q1", "A", [4, 6], 10), ("q2", "B", [0, 3], 20), ("q3", "C", [1, 2], None)]
    oracle.write_text("".join(json.dumps({"question_id": q, "ref_answer": a, "key_span": k}) + "\n" for q, a, k, _ in rows))
    gt.write_text("".join(json.dumps({"question_id": q, "duration_s": d}) + "\n" for q, _, _, d in rows if d))
    preds = {}
    for cond, answers in {"full": "ABC", "key": "ABD", "mask": "ADD", "random": "DDD"}.items():
        preds[cond] = tmp_path / f"{cond}.jsonl"
        preds[cond].write_text(
            "".join(json.dumps({"question_id": q, "answer": a}) + "\n" for (q, *_), a in zip(rows, answers))
        )
    args = ["--output-dir", str(tmp_path / "out"), "analyze-evidence", "--oracle", str(oracle), "--ground-truth", str(gt)]
    for cond, path in preds.items():
        args += [f"--predictions-{cond}", str(path)]
    assert main(args) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["questions"] == 2
    assert report["acc_full"] == 100.0 and report["acc_mask"] == 33.33
    assert report["key_necessity"] == 66.67 and report["key_specificity"] == 66.67
    plans = (tmp_path / "out" / "analysis" / "frame_conditions.jsonl").read_text().splitlines()
    assert json.loads(plans[0])["only_key"] == [4.0, 4.5, 5.0, 5.5]


def test_analyze_without_predictions(tmp_path, capsys):
    oracle = tmp_path / "oracle.jsonl"
    oracle.write_text(json.dumps({"question_id": "q", "ref_answer": "A", "key_span": [1, 2], "duration_s": 5}) + "\n")
    assert main(["--output-dir", str(tmp_path), "analyze-evidence", "--oracle", str(oracle)]) == 0
    assert json.loads(capsys.readouterr().out) == {"questions": 1}


@pytest.mark.skipif(shutil.which("evicoevo") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["evicoevo", "config", "--dump"], capture_output=True, text=True, check=True)
    assert "[heuristics]" in proc.stdout
