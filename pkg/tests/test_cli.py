import json

import numpy as np
import pytest

from mview import io
from mview.cli import run
from mview.evaluation import DetectionSet, GroundTruthSet
from mview.geometry import GroundGrid, plane_homography, build_projection
from mview.synth import ring_rig


@pytest.fixture
def small_setup(tmp_path):
    grid = GroundGrid(origin=(0, 0), extent=(4.0, 6.0), shape=(40, 60))
    calibs = ring_rig(grid, 3, camera_height=5.0, standoff=2.0, image_size=(96, 64))
    io.write_calibrations(calibs, tmp_path / "calib.json")
    io.write_grid(grid, tmp_path / "grid.json")
    rng = np.random.default_rng(0)
    for f in ("000", "001", "002"):
        d = tmp_path / "frames" / f
        d.mkdir(parents=True)
        for c in calibs:
            io.write_image(rng.integers(1, 256, size=(64, 96, 3), dtype=np.uint8), d / f"{c.camera_id}.png")
    return tmp_path, grid, calibs


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_derive(small_setup):
    tmp, grid, calibs = small_setup
    out = tmp / "out"
    assert run(["derive", "--calib", str(tmp / "calib.json"), "--grid", str(tmp / "grid.json"),
                "--heights", "0,0.9", "--out", str(out)]) == 0
    doc = json.loads((out / "homographies.json").read_text())
    assert len(doc["cameras"]) == 3
    cam = doc["cameras"][1]
    assert [p["height"] for p in cam["planes"]] == [0.0, 0.9]
    expected = plane_homography(build_projection(calibs[1]), 0.9).h_matrix
    np.testing.assert_allclose(cam["planes"][1]["top_to_cam"], expected, rtol=1e-15)
    np.testing.assert_allclose(np.array(cam["planes"][1]["cam_to_top"]) @ expected, np.eye(3), atol=1e-9)


def test_eval_prints_four_metrics(tmp_path, capsys):
    io.write_point_sets([GroundTruthSet(0, [[1, 1], [3, 1], [5, 5]])], tmp_path / "gt.jsonl")
    io.write_point_sets([DetectionSet(0, [[1, 1], [3, 1], [9, 9]])], tmp_path / "d.jsonl")
    code = run(["eval", "--det", str(tmp_path / "d.jsonl"), "--gt", str(tmp_path / "gt.jsonl"),
                "--report", str(tmp_path / "r.json")])
    assert code == 0
    line = capsys.readouterr().out
    assert "MODA 0.3333" in line and "Precision 0.6667" in line and "Recall 0.6667" in line and "MODP 1.0000" in line
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["radius"] == 0.5 and rep["aggregate"]["moda"] == 0.3333


def test_synth_warp_eval_pipeline(tmp_path, capsys):
    spec = {
        "grid": {"origin": [0, 0], "extent": [12, 36], "shape": [120, 360]},
        "rig": {"n_cameras": 4},
        "random_pedestrians": {"n": 10, "min_separation": 2.5, "seed": 0},
    }
    (tmp_path / "s.json").write_text(json.dumps(spec))
    scene = tmp_path / "scene"
    assert run(["synth", "--spec", str(tmp_path / "s.json"), "--out", str(scene)]) == 0
    assert run(["warp", "--calib", str(scene / "calib.json"), "--grid", str(scene / "grid.json"),
                "--maps", str(scene / "maps"), "--out", str(tmp_path / "w"), "--localize"]) == 0
    stack = json.loads((tmp_path / "w" / "stack.json").read_text())
    assert len(stack["layers"]) == 20 and stack["order"] == "camera-major"
    capsys.readouterr()
    assert run(["eval", "--det", str(tmp_path / "w" / "detections.jsonl"), "--gt", str(scene / "gt.jsonl")]) == 0
    assert "MODA 1.0000" in capsys.readouterr().out


def test_synth_writes_stack(tmp_path):
    spec = {
        "grid": {"origin": [0, 0], "extent": [4, 6], "shape": [40, 60]},
        "rig": {"n_cameras": 2, "camera_height": 5.0, "standoff": 2.0, "image_size": [96, 64]},
        "pedestrians": [{"grid_index": 1230}],
    }
    (tmp_path / "s.json").write_text(json.dumps(spec))
    assert run(["synth", "--spec", str(tmp_path / "s.json"), "--out", str(tmp_path / "o"),
                "--stack", "--heights", "0,0.9"]) == 0
    arr = np.load(tmp_path / "o" / "stack.npy")
    assert arr.shape == (4, 40, 60)


def augment_args(tmp, out, *extra):
    return ["augment", "--calib", str(tmp / "calib.json"), "--grid", str(tmp / "grid.json"),
            "--frames", str(tmp / "frames"), "--n", "4", "--seed", "3", "--out", str(out), *extra]


def test_augment_outputs_and_determinism(small_setup):
    tmp, _, calibs = small_setup
    assert run(augment_args(tmp, tmp / "a")) == 0
    assert run(augment_args(tmp, tmp / "b")) == 0
    assert run(augment_args(tmp, tmp / "c", "--jobs", "3")) == 0
    a = tree_bytes(tmp / "a")
    assert a == tree_bytes(tmp / "b") == tree_bytes(tmp / "c")
    rec = json.loads((tmp / "a" / "001" / "occlusions.json").read_text())
    assert len(rec["occlusions"]) == 4
    assert {v["camera_id"] for v in rec["occlusions"][0]["views"]} == {c.camera_id for c in calibs}
    # frames get different occluders
    assert a["000/occlusions.json"] != a["001/occlusions.json"]


def test_augment_p_zero_copies_frames(small_setup):
    tmp, _, calibs = small_setup
    assert run(augment_args(tmp, tmp / "z", "--p", "0")) == 0
    for c in calibs:
        before = io.read_image(tmp / "frames" / "002" / f"{c.camera_id}.png")
        after = io.read_image(tmp / "z" / "002" / f"{c.camera_id}.png")
        assert before.tobytes() == after.tobytes()


def test_config_file_and_flag_override(small_setup):
    tmp, _, _ = small_setup
    cfg = tmp / "cfg.json"
    cfg.write_text(json.dumps({"n": 2, "seed": 3, "max-rejections": 500}))
    assert run(augment_args(tmp, tmp / "flag", "--config", str(cfg))) == 0  # --n 4 wins
    rec = json.loads((tmp / "flag" / "000" / "occlusions.json").read_text())
    assert len(rec["occlusions"]) == 4
    base = ["augment", "--calib", str(tmp / "calib.json"), "--grid", str(tmp / "grid.json"),
            "--frames", str(tmp / "frames"), "--out", str(tmp / "cfg_out"), "--config", str(cfg)]
    assert run(base) == 0
    rec = json.loads((tmp / "cfg_out" / "000" / "occlusions.json").read_text())
    assert len(rec["occlusions"]) == 2


def test_gtmap(tmp_path, small_setup):
    tmp, grid, calibs = small_setup
    doc = [{"frame_id": 5, "pedestrians": [
        {"id": 1, "grid_index": 1230, "views": [{"cam": 0, "head": [40, 10], "foot": [40, 50]}]}]}]
    (tmp / "ann.json").write_text(json.dumps(doc))
    out = tmp / "gt"
    assert run(["gtmap", "--annotations", str(tmp / "ann.json"), "--grid", str(tmp / "grid.json"),
                "--calib", str(tmp / "calib.json"), "--sigma", "2", "--out", str(out)]) == 0
    occ = io.read_map(out / "5" / "occupancy.f32")
    assert occ.sum() == 1.0 and occ[grid.index_to_cell(1230)] == 1.0
    assert io.read_map(out / "5" / "occupancy_blurred.f32").sum() == pytest.approx(1.0, abs=1e-6)
    assert io.read_map(out / "5" / "foot_0.f32").shape == (64, 96)
    assert not io.read_map(out / "5" / "head_1.f32").any()


def test_exit_codes(tmp_path, small_setup, capsys):
    tmp, _, _ = small_setup
    assert run(["derive", "--out", str(tmp_path / "o")]) == 2
    assert run(["nonsense"]) == 2
    assert run(["eval", "--det", str(tmp_path / "missing.jsonl"), "--gt", str(tmp_path / "missing.jsonl")]) == 1
    (tmp_path / "gt.jsonl").write_text('{"frame_id": 1, "points": []}\n')
    (tmp_path / "d.jsonl").write_text('{"frame_id": 2, "points": []}\n')
    assert run(["eval", "--det", str(tmp_path / "d.jsonl"), "--gt", str(tmp_path / "gt.jsonl")]) == 1
    # impossible placement: 5000 occluders 1 m apart in a 4 x 6 m area
    assert run(augment_args(tmp, tmp / "x", "--n", "5000", "--max-rejections", "50")) == 1
    err = capsys.readouterr().err
    assert "PlacementExhausted" in err
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text(json.dumps({"bogus": 1}))
    assert run(["eval", "--det", str(tmp_path / "d.jsonl"), "--gt", str(tmp_path / "gt.jsonl"),
                "--config", str(bad_cfg)]) == 2
