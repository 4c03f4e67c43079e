import json

import pytest

from objperm.cli import EXIT_INPUT, EXIT_PROTOCOL, main
from objperm.io import load_world, parse_mot, world_records
from objperm.world import crossing


@pytest.fixture
def world(tmp_path):
    out, gt = tmp_path / "world.json", tmp_path / "gt.txt"
    assert main(["simulate", "--preset", "crossing", "--out", str(out), "--gt", str(gt)]) == 0
    return out, gt


def _config(tmp_path, name="run.json", **body):
    path = tmp_path / name
    path.write_text(json.dumps({"world": "world.json", **body}))
    return path


def test_simulate_is_deterministic(world, tmp_path):
    out, gt = world
    assert main(["simulate", "--preset", "crossing", "--out", str(tmp_path / "b.json"), "--gt", str(tmp_path / "b.txt")]) == 0
    assert out.read_bytes() == (tmp_path / "b.json").read_bytes()
    assert gt.read_bytes() == (tmp_path / "b.txt").read_bytes()
    assert load_world(out) == crossing()
    assert parse_mot(gt) == world_records(crossing())


def test_run_then_eval(world, tmp_path, capsys):
    _, gt = world
    cfg = _config(tmp_path, pipeline="iop-lite")
    res, trace, rep = tmp_path / "res.txt", tmp_path / "trace.json", tmp_path / "rep.json"
    assert main(["run", "--config", str(cfg), "--out", str(res), "--trace", str(trace)]) == 0
    frames = json.loads(trace.read_text())["frames"]
    assert len(frames) == crossing().frames
    assert set(frames[0]) == {"frame", "proposals", "refined", "emitted", "feedback"}
    assert frames[0]["feedback"] == 0
    assert main(["eval", "--results", str(res), "--gt", str(gt), "--out", str(rep)]) == 0
    doc = json.loads(rep.read_text())
    values = doc["sequences"]["res"]
    assert values["ids"] <= 1 and 0.0 < values["mota"] <= 1.0 and 0.0 < values["map"] <= 1.0
    assert "mota" in capsys.readouterr().out
    dist = tmp_path / "dist.json"
    assert main(["eval", "--results", str(res), "--gt", str(gt), "--metrics", "mot", "--motp-distance", "--out", str(dist)]) == 0
    assert json.loads(dist.read_text())["sequences"]["res"]["motp"] == pytest.approx(1.0 - values["motp"])


def test_history_one_equals_lite(world, tmp_path):
    outs = []
    for pipeline in ("iop-lite", "iop-history"):
        cfg = _config(tmp_path, f"{pipeline}.json", pipeline=pipeline, seed=3, iop={"history": 1})
        res = tmp_path / f"{pipeline}.txt"
        assert main(["run", "--config", str(cfg), "--out", str(res)]) == 0
        outs.append(res.read_bytes())
    assert outs[0] == outs[1]


def test_sweep_cell_equals_run_and_eval(world, tmp_path):
    _, gt = world
    sw = tmp_path / "sweep.json"
    args = ["sweep", "--preset", "crossing", "--grid", "particles=20", "history=1", "--seeds", "1", "--seed", "2",
            "--metrics", "map,mot", "--out", str(sw)]
    assert main(args) == 0
    doc = json.loads(sw.read_text())
    (cell,) = doc["cells"]
    assert doc["matrix"]["map"]["mean"] == [[cell["map"]["mean"]]]
    cfg = _config(tmp_path, pipeline="iop-particles", seed=2, iop={"particles": 20, "history": 1}, pf={"capacity": 20})
    res, rep = tmp_path / "res.txt", tmp_path / "rep.json"
    assert main(["run", "--config", str(cfg), "--out", str(res)]) == 0
    assert main(["eval", "--results", str(res), "--gt", str(gt), "--metrics", "map,mot", "--out", str(rep)]) == 0
    values = json.loads(rep.read_text())["sequences"]["res"]
    for key in ("map", "mota", "ids"):
        assert values[key] == pytest.approx(cell[key]["mean"]), key


def test_sweep_matrix_shape(tmp_path):
    sw = tmp_path / "sweep.json"
    args = ["sweep", "--preset", "crossing", "--pipeline", "iop-history", "--grid", "particles=0", "history=1..3",
            "--seeds", "2", "--metrics", "map", "--out", str(sw)]
    assert main(args) == 0
    mat = json.loads(sw.read_text())["matrix"]["map"]
    assert mat["history"] == [1, 2, 3] and mat["particles"] == [0]
    assert len(mat["mean"]) == 1 and len(mat["mean"][0]) == 3


def test_bench_plain_only(tmp_path):
    out = tmp_path / "bench.json"
    assert main(["bench", "--pipelines", "plain", "--preset", "crossing", "--frames", "60", "--reps", "2",
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["schema"] == "objperm.latency/1"
    assert doc["pipelines"]["plain"]["overhead_ms"] == 0.0
    assert doc["pipelines"]["plain"]["samples"] == 100


@pytest.mark.parametrize(
    "body",
    [{"pipeline": "magic"}, {"pipelin": "kf"}, {"world": "missing.json"}, {"world": "world.json", "preset": "crowd"}],
)
def test_bad_config_exits_with_input_code(world, tmp_path, body):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"world": "world.json", **body}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r.txt")]) == EXIT_INPUT
    assert not (tmp_path / "r.txt").exists()


def test_malformed_results_exit_with_input_code(world, tmp_path):
    _, gt = world
    bad = tmp_path / "bad.txt"
    bad.write_text("1,1,0,0,-5,5\n")
    assert main(["eval", "--results", str(bad), "--gt", str(gt), "--out", str(tmp_path / "r.json")]) == EXIT_INPUT


def test_external_protocol_error_exit_code(tmp_path):
    det = tmp_path / "det.txt"
    det.write_text("1,-1,0,0,10,10,0.8\n")
    cfg = tmp_path / "ext.json"
    cfg.write_text(json.dumps({"detector": "external", "det_file": "det.txt", "pipeline": "plain",
                               "frame_size": [100, 100], "external_command": ["python3", "-c", "print('x')"]}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r.txt")]) == EXIT_PROTOCOL
