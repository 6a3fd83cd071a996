from __future__ import annotations

import io
import json
import shutil
import subprocess
import sys

import pytest

import scene
from trafficsg.cli import main
from trafficsg.graph import load_snapshot


@pytest.fixture
def inputs(tmp_path):
    return scene.write_inputs(tmp_path)


@pytest.fixture
def graph_path(inputs, tmp_path, capsys):
    out = tmp_path / "graph.json"
    assert main(["build-graph", "--detections", str(inputs["detections"]), "--calibration",
                 str(inputs["calibration"]), "--lanes", str(inputs["lanes"]), "--out", str(out)]) == 0
    capsys.readouterr()
    return out


def test_build_graph_prints_counts(inputs, tmp_path, capsys):
    out = tmp_path / "g.json"
    cql = tmp_path / "g.cql"
    code = main(["build-graph", "--detections", str(inputs["detections"]), "--calibration",
                 str(inputs["calibration"]), "--lanes", str(inputs["lanes"]), "--out", str(out),
                 "--export-cypher", str(cql)])
    assert code == 0
    text = capsys.readouterr().out
    n_obs = len(scene.detections())
    assert f"frames=100 instances=12 lanes=2 observations={n_obs}" in text
    assert f"Temporal={n_obs - 12}" in text
    assert cql.read_text().startswith("CREATE (:Frame")
    assert len(load_snapshot(out).observations) == n_obs


def test_build_graph_missing_calibration(inputs, tmp_path, capsys):
    missing = tmp_path / "nope.json"
    code = main(["build-graph", "--detections", str(inputs["detections"]), "--calibration", str(missing),
                 "--out", str(tmp_path / "g.json")])
    assert code != 0
    assert str(missing) in capsys.readouterr().err


def test_build_graph_bad_detections(inputs, tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"video_id": "v"}\n')
    code = main(["build-graph", "--detections", str(bad), "--calibration", str(inputs["calibration"]),
                 "--out", str(tmp_path / "g.json")])
    assert code == 2
    assert "line 1" in capsys.readouterr().err


def test_export_cypher_command(graph_path, tmp_path, capsys):
    assert main(["export-cypher", "--graph", str(graph_path)]) == 0
    text = capsys.readouterr().out
    assert text.count("CREATE (:Instance") == 12


def test_query_count(graph_path, capsys):
    assert main(["query", "--graph", str(graph_path), "count_objects", "frame_id=5"]) == 0
    assert "count=7 bicycle=1 car=4 pedestrian=2" in capsys.readouterr().out


def test_query_time_window(graph_path, capsys):
    assert main(["query", "--graph", str(graph_path), "time_window", "track_id=3"]) == 0
    assert capsys.readouterr().out.strip() == "start=10 end=20 duration=0.4 fps=25"


def test_query_unknown_tool(graph_path, capsys):
    assert main(["query", "--graph", str(graph_path), "fly_drone"]) != 0
    out = capsys.readouterr().out
    assert "unknown tool" in out and "count_objects" in out


def test_query_tool_error_exit(graph_path, capsys):
    assert main(["query", "--graph", str(graph_path), "time_window", "track_id=404"]) != 0


def test_query_bad_pair(graph_path, capsys):
    assert main(["query", "--graph", str(graph_path), "time_window", "track_id"]) == 1


def test_ask_scripted(graph_path, inputs, tmp_path, capsys):
    traj = tmp_path / "t.jsonl"
    code = main(["ask", "How many cars are visible at frame 5?", "--graph", str(graph_path),
                 "--script", str(inputs["script"]), "--question-id", "q01", "--out", str(traj)])
    assert code == 0
    assert capsys.readouterr().out.strip() == "4"
    header = json.loads(traj.read_text().splitlines()[0])
    assert header["termination"] == "stop_signal" and header["question_id"] is None


def test_ask_remote_without_token(graph_path, tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("TSG_NO_SUCH_TOKEN", raising=False)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"remote": {"endpoint": "http://10.255.255.1/v1", "model": "m",
                                          "token_env": "TSG_NO_SUCH_TOKEN", "timeout_s": 0.1}}))
    code = main(["ask", "Q", "--graph", str(graph_path), "--backend", "remote", "--config", str(cfg)])
    assert code == 1
    assert "TSG_NO_SUCH_TOKEN" in capsys.readouterr().err


def test_ask_max_steps(graph_path, tmp_path, capsys):
    script = tmp_path / "loop.json"
    script.write_text(json.dumps({"replies": [
        'Thought: again\nAction: count_objects\nAction Input: {"frame_id": 1}'], "cycle": True}))
    traj = tmp_path / "t.jsonl"
    code = main(["ask", "Q", "--graph", str(graph_path), "--script", str(script), "--max-steps", "3",
                 "--out", str(traj)])
    assert code == 0
    lines = traj.read_text().splitlines()
    assert json.loads(lines[0])["termination"] == "max_steps_reached"
    assert len(lines) == 1 + 3


def test_ask_backend_failure_exit(graph_path, tmp_path, capsys):
    script = tmp_path / "bad.json"
    script.write_text(json.dumps({"replies": ["nonsense", "more nonsense"]}))
    code = main(["ask", "Q", "--graph", str(graph_path), "--script", str(script),
                 "--out", str(tmp_path / "t.jsonl")])
    assert code == 3


def test_ask_interactive(graph_path, inputs, tmp_path, monkeypatch, capsys):
    script = tmp_path / "s.json"
    script.write_text(json.dumps({"replies": ["Thought: ok\nFinal Answer: 42"], "cycle": True}))
    monkeypatch.setattr(sys, "stdin", io.StringIO("first?\n\nsecond?\nquit\nnever asked\n"))
    code = main(["ask", "--interactive", "--graph", str(graph_path), "--script", str(script),
                 "--out", str(tmp_path / "t.jsonl")])
    assert code == 0
    assert capsys.readouterr().out.split() == ["42", "42"]
    assert (tmp_path / "t_1.jsonl").exists() and (tmp_path / "t_2.jsonl").exists()


def test_eval_suite_and_rescore(graph_path, inputs, tmp_path, capsys):
    out = tmp_path / "eval"
    code = main(["eval", "--graph", str(graph_path), "--qa", str(inputs["qa"]), "--script",
                 str(inputs["script"]), "--vlm-script", str(inputs["vlm_script"]), "--out", str(out)])
    assert code == 0
    printed = capsys.readouterr().out
    assert "Average      10/10    1.00    10/10    1.00    20/20     1.00" in printed
    assert len((out / "results.jsonl").read_text().splitlines()) == 20
    assert len(list((out / "trajectories").glob("*.jsonl"))) == 20
    assert main(["eval", "--results", str(out / "results.jsonl")]) == 0
    assert capsys.readouterr().out == printed


def test_eval_parallel_matches_serial(graph_path, inputs, tmp_path, capsys):
    tables = []
    for jobs in ("1", "4"):
        out = tmp_path / f"eval{jobs}"
        main(["eval", "--graph", str(graph_path), "--qa", str(inputs["qa"]), "--script", str(inputs["script"]),
              "--vlm-script", str(inputs["vlm_script"]), "--out", str(out), "--jobs", jobs])
        tables.append(capsys.readouterr().out)
        tables.append((out / "results.jsonl").read_text())
    assert tables[0] == tables[2] and tables[1] == tables[3]


def test_eval_failures_count_as_wrong(graph_path, inputs, tmp_path, capsys):
    script = tmp_path / "s.json"
    script.write_text(json.dumps({"questions": {"q01": ["Thought: x\nFinal Answer: 4"]}}))
    code = main(["eval", "--graph", str(graph_path), "--qa", str(inputs["qa"]), "--script", str(script),
                 "--out", str(tmp_path / "e")])
    assert code == 0
    assert "Average      1/10" in capsys.readouterr().out


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as ei:
        main(["frobnicate"])
    assert ei.value.code == 1


def test_bad_config_file(graph_path, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert main(["query", "--graph", str(graph_path), "--config", str(cfg), "count_objects", "frame_id=1"]) == 1


@pytest.mark.skipif(shutil.which("trafficsg") is None, reason="console script not installed")
def test_console_script(graph_path):
    proc = subprocess.run(["trafficsg", "query", "--graph", str(graph_path), "time_window", "track_id=3"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "start=10 end=20 duration=0.4 fps=25"
