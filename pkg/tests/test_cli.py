import json
import subprocess
import sys

import numpy as np
import pytest

from pcfgrasp.cli import main
from pcfgrasp.cloud import read_ply
from pcfgrasp.config import PipelineConfig, load_config, parse_config_text
from pcfgrasp.errors import ArgumentError
from pcfgrasp.grasp import load_poses
from pcfgrasp.pcf import load_features

FAST = ["--n-points", "256"]


def run(*argv):
    assert main([str(a) for a in argv]) == 0


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    run("scenegen", "--kind", "cylinder", "--labels", 100, "--out", d / "scene.json", "--seed", 1)
    run("view", "--scene", d / "scene.json", "--out", d / "view.ply", "--samples", 60000, "--seed", 1)
    run("complete", "--cloud", d / "view.ply", "--out", d / "comp.ply", *FAST)
    run("train", "--steps", 0, "--out", d / "init.ckpt", *FAST)
    run("features", "--cloud", d / "view.ply", "--completion", d / "comp.ply", "--checkpoint", d / "init.ckpt",
        "--out", d / "feat.bin", *FAST)
    run("propose", "--cloud", d / "view.ply", "--completion", d / "comp.ply", "--checkpoint", d / "init.ckpt",
        "--features", d / "feat.bin", "--out", d / "grasps.json", *FAST)
    run("filter", "--grasps", d / "grasps.json", "--view", d / "view.json", "--out", d / "filtered.json")
    return d


def test_pipeline_artifacts(pipeline):
    scene = json.loads((pipeline / "scene.json").read_text())
    assert scene["objects"][0]["kind"] == "cylinder" and len(scene["labels"]) == 100
    assert len(read_ply(pipeline / "view.ply")) > 256
    assert set(json.loads((pipeline / "view.json").read_text())) >= {"R", "t", "focal"}
    assert len(read_ply(pipeline / "comp.ply")) == 256
    assert load_features(pipeline / "feat.bin").shape == (256, 320)


def test_proposals_schema(pipeline):
    record = json.loads((pipeline / "grasps.json").read_text())
    assert record["frame"] == "camera"
    assert set(record["provenance"]) == {"config_hash", "seed", "git", "checkpoint"}
    grasps = record["grasps"]
    assert 1 <= len(grasps) <= 256
    scores = [g["score"] for g in grasps]
    assert scores == sorted(scores, reverse=True)
    for g in grasps:
        assert set(g) == {"R", "t", "width", "score"}
        R = np.array(g["R"])
        assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-9


def test_filtered_output(pipeline):
    record = json.loads((pipeline / "filtered.json").read_text())
    assert record["frame"] == "camera" and "robot_frame" in record and "provenance" in record
    filtered = [g["filtered_score"] for g in record["grasps"]]
    assert filtered == sorted(filtered, reverse=True)
    assert all(0 < f < g["score"] for f, g in zip(filtered, record["grasps"]))


def test_filter_with_robot_frame_file(pipeline, tmp_path):
    frame = {"origin": [0.0, 0.0, 0.0], "z_axis": [0.0, 0.0, 1.0], "R_cr": np.eye(3).tolist()}
    (tmp_path / "frame.json").write_text(json.dumps(frame))
    run("filter", "--grasps", pipeline / "grasps.json", "--robot-frame", tmp_path / "frame.json",
        "--out", tmp_path / "f.json")
    record = json.loads((tmp_path / "f.json").read_text())
    assert record["robot_frame"] == frame
    assert len(record["grasps"]) == len(json.loads((pipeline / "grasps.json").read_text())["grasps"])


def test_eval_prints_metrics(pipeline, capsys):
    capsys.readouterr()
    run("eval", "--grasps", pipeline / "filtered.json", "--scene", pipeline / "scene.json",
        "--view", pipeline / "view.json", "--cloud", pipeline / "view.ply", "--out", pipeline / "m.json")
    metrics = json.loads(capsys.readouterr().out)
    assert metrics == json.loads((pipeline / "m.json").read_text())
    for key in ("precision_at_k", "coverage", "collision_rate"):
        assert 0.0 <= metrics[key] <= 1.0


def test_propose_is_deterministic(pipeline, tmp_path):
    args = ["propose", "--cloud", pipeline / "view.ply", "--completion", pipeline / "comp.ply",
            "--checkpoint", pipeline / "init.ckpt", *FAST]
    run(*args, "--out", tmp_path / "a.json")
    run(*args, "--out", tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    # features computed inline equal the dumped ones
    a = load_poses(tmp_path / "a.json")
    b = load_poses(pipeline / "grasps.json")
    assert len(a) == len(b) and all(np.allclose(p.t, q.t, atol=1e-12) for p, q in zip(a, b))


def test_scenegen_and_view_deterministic(tmp_path):
    for name in ("a", "b"):
        run("scenegen", "--kind", "box", "--labels", 10, "--out", tmp_path / f"{name}.json", "--seed", 4)
        run("view", "--scene", tmp_path / f"{name}.json", "--out", tmp_path / f"{name}.ply",
            "--samples", 20000, "--seed", 4)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()


def test_short_training_run(pipeline, tmp_path):
    metrics = tmp_path / "metrics.jsonl"
    run("train", "--scene", pipeline / "scene.json", "--cloud", pipeline / "view.ply", "--steps", 2,
        "--out", tmp_path / "t.ckpt", "--metrics", metrics, *FAST)
    lines = [json.loads(x) for x in metrics.read_text().splitlines()]
    assert [r["step"] for r in lines] == [0, 1]
    assert set(lines[0]) >= {"step", "l_bce", "l_adds", "l_width", "l_total"}
    assert (tmp_path / "t.ckpt").exists()


def _error(capsys, *argv):
    capsys.readouterr()
    assert main([str(a) for a in argv]) == 1
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_missing_checkpoint_code(pipeline, tmp_path, capsys):
    err = _error(capsys, "propose", "--cloud", pipeline / "view.ply", "--checkpoint", tmp_path / "none.ckpt",
                 "--out", tmp_path / "g.json", *FAST)
    assert err["code"] == "CHECKPOINT_MISSING"


def test_missing_input_code(tmp_path, capsys):
    err = _error(capsys, "complete", "--cloud", tmp_path / "nope.ply", "--out", tmp_path / "c.ply")
    assert err["code"] == "ARGUMENT" and "nope.ply" in err["message"]


def test_filter_needs_frame(pipeline, tmp_path, capsys):
    err = _error(capsys, "filter", "--grasps", pipeline / "grasps.json", "--out", tmp_path / "f.json")
    assert err["code"] == "ARGUMENT"


def test_bad_json_code(tmp_path, capsys):
    bad = tmp_path / "scene.json"
    bad.write_text("{not json")
    err = _error(capsys, "view", "--scene", bad, "--out", tmp_path / "v.ply")
    assert err["code"] == "FORMAT"


def test_train_pairs_mismatch(tmp_path, capsys):
    err = _error(capsys, "train", "--steps", 3, "--scene", tmp_path / "s.json", "--out", tmp_path / "c.ckpt")
    assert err["code"] == "ARGUMENT"


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("net.bogus = 1\n")
    err = _error(capsys, "scenegen", "--config", cfg, "--out", tmp_path / "s.json")
    assert err["code"] == "ARGUMENT"


# configuration -------------------------------------------------------------------
def test_config_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nseed = 3\nnet.n_points = 512  # trailing\npcf.fanouts = 16, 16, 32\neval.k = 5\n")
    cfg = load_config(path)
    assert (cfg.seed, cfg.net.n_points, cfg.pcf.fanouts, cfg.eval.k) == (3, 512, (16, 16, 32), 5)
    cfg = load_config(path, {"seed": 9, "net.n_points": 128})
    assert (cfg.seed, cfg.net.n_points) == (9, 128)
    assert load_config().seed == 0


def test_config_flag_matches_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 6\n")
    run("scenegen", "--config", path, "--labels", 5, "--out", tmp_path / "a.json")
    run("scenegen", "--seed", 6, "--labels", 5, "--out", tmp_path / "b.json")
    run("scenegen", "--config", path, "--seed", 7, "--labels", 5, "--out", tmp_path / "c.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.json").read_bytes() != (tmp_path / "c.json").read_bytes()


def test_config_pcf_width_propagates():
    cfg = PipelineConfig().with_overrides({"pcf.mlp_widths": [[8, 8], [8, 16], [8, 8]]})
    assert cfg.pcf.out_channels == 32 and cfg.net.feature_channels == 32


def test_config_digest_and_errors(tmp_path):
    assert PipelineConfig().digest() == PipelineConfig().digest()
    assert PipelineConfig().digest() != PipelineConfig(seed=1).digest()
    with pytest.raises(ArgumentError):
        parse_config_text("just words")
    with pytest.raises(ArgumentError):
        load_config(tmp_path / "missing.cfg")
    with pytest.raises(ArgumentError):
        PipelineConfig().with_overrides({"optimizer.lr": 1})


# bench -----------------------------------------------------------------------------
def test_bench_record(tmp_path, capsys):
    capsys.readouterr()
    run("bench", "fps", "--n", 2000, "--m", 64, "--repeats", 3, "--out", tmp_path / "b.json")
    record = json.loads(capsys.readouterr().out)
    assert record == json.loads((tmp_path / "b.json").read_text())
    assert set(record) >= {"kernel", "n", "params", "repeats", "mean_ms", "p95_ms", "threads", "hardware"}
    assert record["kernel"] == "fps" and record["repeats"] == 3 and record["mean_ms"] > 0
    assert "cpu" in record["hardware"]


def test_bench_other_kernels():
    from pcfgrasp import bench

    for kernel in ("query_ball", "pcf_forward"):
        rec = bench.run(kernel, 2048, 128, repeats=1, warmup=0)
        assert rec["kernel"] == kernel and rec["mean_ms"] > 0
    with pytest.raises(ArgumentError):
        bench.run("fps", 10, 20)


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "pcfgrasp.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "scenegen" in out.stdout
