import json

import numpy as np
import pytest

from mview import io
from mview.errors import FormatError, InvalidCalibration
from mview.evaluation import DetectionSet, GroundTruthSet
from mview.geometry import GroundGrid


def test_calibration_round_trip(tmp_path, wildtrack_rig):
    path = tmp_path / "calib.json"
    io.write_calibrations(wildtrack_rig, path)
    back = io.read_calibrations(path)
    assert [c.camera_id for c in back] == [c.camera_id for c in wildtrack_rig]
    for a, b in zip(wildtrack_rig, back):
        np.testing.assert_array_equal(a.intrinsics, b.intrinsics)
        np.testing.assert_array_equal(a.rotation, b.rotation)
        np.testing.assert_array_equal(a.translation, b.translation)
        assert a.image_size == b.image_size


def test_calibration_errors(tmp_path, wildtrack_rig):
    rec = io.calibration_to_dict(wildtrack_rig[0])
    rec["dist"] = [0.1, 0, 0, 0, 0]
    with pytest.raises(InvalidCalibration):
        io.calibration_from_dict(rec)
    del rec["K"]
    with pytest.raises(FormatError):
        io.calibration_from_dict({k: v for k, v in rec.items() if k != "dist"})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(FormatError):
        io.read_calibrations(bad)
    bad.write_text("[]")
    with pytest.raises(FormatError):
        io.read_calibrations(bad)


def test_grid_round_trip(tmp_path):
    grid = GroundGrid(origin=(-3.0, -9.0), extent=(12.0, 36.0), shape=(120, 360))
    io.write_grid(grid, tmp_path / "g.json")
    back = io.read_grid(tmp_path / "g.json")
    assert back.shape == grid.shape and back.extent == grid.extent
    np.testing.assert_array_equal(back.origin, grid.origin)


def test_point_sets_round_trip(tmp_path):
    dets = [DetectionSet(0, [[1.0, 2.0], [3.5, 4.25]], [0.9, 0.3]), DetectionSet(4, np.empty((0, 2)))]
    io.write_point_sets(dets, tmp_path / "d.jsonl")
    back = io.read_detections(tmp_path / "d.jsonl")
    assert [d.frame_id for d in back] == [0, 4]
    np.testing.assert_array_equal(back[0].points, dets[0].points)
    np.testing.assert_array_equal(back[0].scores, [0.9, 0.3])
    assert back[1].points.shape == (0, 2)
    io.write_point_sets([GroundTruthSet(2, [[0.5, 0.5]])], tmp_path / "gt.jsonl")
    (gt,) = io.read_ground_truth(tmp_path / "gt.jsonl")
    assert gt.frame_id == 2 and gt.points.tolist() == [[0.5, 0.5]]


def test_detections_accept_json_array(tmp_path):
    path = tmp_path / "d.json"
    path.write_text(json.dumps([{"frame_id": 1, "points": [[1, 1]]}, {"frame_id": 2, "points": [[2, 2, 0.5]]}]))
    d1, d2 = io.read_detections(path)
    assert d1.scores.tolist() == [1.0] and d2.scores.tolist() == [0.5]


def test_raw_map_round_trip_and_header(tmp_path, rng):
    data = rng.normal(size=(7, 11)).astype(np.float32)
    path = tmp_path / "m.f32"
    io.write_raw_map(data, path)
    blob = path.read_bytes()
    assert len(blob) == 16 + 4 * 7 * 11
    assert blob[:8] == b"MVMAPF32"
    assert int.from_bytes(blob[8:12], "little") == 7 and int.from_bytes(blob[12:16], "little") == 11
    np.testing.assert_array_equal(io.read_map(path), data)


def test_raw_map_corruption(tmp_path):
    path = tmp_path / "m.f32"
    io.write_raw_map(np.zeros((2, 2)), path)
    blob = path.read_bytes()
    path.write_bytes(b"XXXXXXXX" + blob[8:])
    with pytest.raises(FormatError):
        io.read_raw_map(path)
    path.write_bytes(blob[:-4])
    with pytest.raises(FormatError):
        io.read_raw_map(path)
    path.write_bytes(blob[:10])
    with pytest.raises(FormatError):
        io.read_raw_map(path)
    with pytest.raises(FormatError):
        io.write_raw_map(np.zeros(3), path)


@pytest.mark.parametrize("bits,top", [(8, 255), (16, 65535)])
def test_png_maps(tmp_path, bits, top):
    data = np.array([[0.0, 1.4, 300.0], [-5.0, 70000.0, 12.6]])
    path = tmp_path / "m.png"
    io.write_png_map(data, path, bits=bits)
    back = io.read_map(path)
    expected = np.clip(np.rint(data), 0, top)
    np.testing.assert_array_equal(back, expected)


def test_png_rejects_colour(tmp_path):
    io.write_image(np.zeros((4, 4, 3), dtype=np.uint8), tmp_path / "c.png")
    with pytest.raises(FormatError):
        io.read_map(tmp_path / "c.png")
    with pytest.raises(ValueError):
        io.write_png_map(np.zeros((2, 2)), tmp_path / "x.png", bits=12)


def test_annotations(tmp_path):
    doc = {
        "frames": [
            {
                "frame_id": 3,
                "pedestrians": [
                    {"id": 7, "grid_index": 12, "views": [{"cam": 0, "head": [1, 2], "foot": [1, 9], "visible": True}]}
                ],
            }
        ]
    }
    (tmp_path / "a.json").write_text(json.dumps(doc))
    (frame,) = io.read_annotations(tmp_path / "a.json")
    assert frame.frame_id == 3
    (ped,) = frame.pedestrians
    assert ped.person_id == 7 and ped.grid_index == 12 and ped.views[0].foot == (1, 9)
    (tmp_path / "b.json").write_text(json.dumps([{"frame_id": 1, "pedestrians": [{"grid_index": 3}]}]))
    with pytest.raises(FormatError):
        io.read_annotations(tmp_path / "b.json")
