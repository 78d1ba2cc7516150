"""Readers and writers for calibrations, grids, annotations, detections and maps.

Structured files are JSON. Detection and ground-truth files hold one frame
per line (JSON Lines); a single JSON array of frame records is also
accepted on input.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np
from PIL import Image

from mview.errors import FormatError, InvalidCalibration
from mview.evaluation import DetectionSet, GroundTruthSet
from mview.geometry import CameraCalibration, GroundGrid
from mview.gtmaps import AnnotationFrame, PedestrianAnnotation, ViewAnnotation

PathLike = Union[str, Path]

RAW_MAGIC = b"MVMAPF32"
RAW_HEADER = struct.Struct("<8sII")  # magic, rows, cols -> 16 bytes


def _load_json(path: PathLike):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def dump_json(obj, path: PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- calibration ---------------------------------------------------------------

def calibration_from_dict(d: dict) -> CameraCalibration:
    try:
        dist = np.asarray(d.get("dist", [0.0] * 5), dtype=np.float64)
        if np.any(dist != 0.0):
            raise InvalidCalibration(f"camera {d['id']}: non-zero distortion; rectify images first")
        return CameraCalibration(
            camera_id=int(d["id"]),
            intrinsics=np.asarray(d["K"], dtype=np.float64).reshape(3, 3),
            rotation=np.asarray(d["R"], dtype=np.float64).reshape(3, 3),
            translation=np.asarray(d["t"], dtype=np.float64).reshape(3),
            image_size=(int(d["width"]), int(d["height"])),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"malformed camera record: {exc}") from None


def calibration_to_dict(c: CameraCalibration) -> dict:
    return {
        "id": c.camera_id,
        "K": c.intrinsics.ravel().tolist(),
        "R": c.rotation.ravel().tolist(),
        "t": c.translation.tolist(),
        "width": c.width,
        "height": c.height,
        "dist": [0.0] * 5,
    }


def read_calibrations(path: PathLike) -> List[CameraCalibration]:
    data = _load_json(path)
    if isinstance(data, dict):
        data = data.get("cameras")
    if not isinstance(data, list) or not data:
        raise FormatError(f"{path}: expected a non-empty list of cameras")
    return [calibration_from_dict(d) for d in data]


def write_calibrations(calibs: Sequence[CameraCalibration], path: PathLike) -> None:
    dump_json({"cameras": [calibration_to_dict(c) for c in calibs]}, path)


# -- grid ------------------------------------------------------------------------

def grid_from_dict(d: dict) -> GroundGrid:
    try:
        return GroundGrid(origin=d["origin"], extent=d["extent"], shape=d["shape"])
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"malformed grid record: {exc}") from None


def grid_to_dict(g: GroundGrid) -> dict:
    return {"origin": g.origin.tolist(), "extent": list(g.extent), "shape": list(g.shape)}


def read_grid(path: PathLike) -> GroundGrid:
    return grid_from_dict(_load_json(path))


def write_grid(grid: GroundGrid, path: PathLike) -> None:
    dump_json(grid_to_dict(grid), path)


# -- annotations -------------------------------------------------------------------

def _annotation_frame(d: dict) -> AnnotationFrame:
    peds = []
    for p in d.get("pedestrians", []):
        views = [
            ViewAnnotation(
                camera_id=int(v["cam"]),
                head=tuple(v["head"]) if v.get("head") is not None else None,
                foot=tuple(v["foot"]) if v.get("foot") is not None else None,
                visible=bool(v.get("visible", True)),
            )
            for v in p.get("views", [])
        ]
        peds.append(PedestrianAnnotation(int(p["id"]), int(p["grid_index"]), views))
    return AnnotationFrame(int(d["frame_id"]), peds)


def read_annotations(path: PathLike) -> List[AnnotationFrame]:
    data = _load_json(path)
    if isinstance(data, dict):
        data = data.get("frames", [data])
    try:
        return [_annotation_frame(d) for d in data]
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"{path}: malformed annotation record: {exc}") from None


# -- detections / ground truth --------------------------------------------------------

def _read_records(path: PathLike) -> List[dict]:
    text = Path(path).read_text()
    stripped = text.lstrip()
    try:
        if stripped.startswith("["):
            return json.loads(stripped)
        return [json.loads(line) for line in text.splitlines() if line.strip()]
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON record ({exc})") from None


def read_detections(path: PathLike) -> List[DetectionSet]:
    out = []
    for rec in _read_records(path):
        pts = [p[:2] for p in rec.get("points", [])]
        scores = [p[2] if len(p) > 2 else 1.0 for p in rec.get("points", [])]
        out.append(DetectionSet(int(rec["frame_id"]), np.array(pts).reshape(-1, 2), np.array(scores)))
    return out


def read_ground_truth(path: PathLike) -> List[GroundTruthSet]:
    out = []
    for rec in _read_records(path):
        pts = [p[:2] for p in rec.get("points", [])]
        out.append(GroundTruthSet(int(rec["frame_id"]), np.array(pts).reshape(-1, 2)))
    return out


def write_point_sets(sets: Iterable[Union[DetectionSet, GroundTruthSet]], path: PathLike) -> None:
    with open(path, "w") as fh:
        for s in sets:
            scores = getattr(s, "scores", None)
            if scores is not None:
                pts = [[float(x), float(y), float(sc)] for (x, y), sc in zip(s.points, scores)]
            else:
                pts = [[float(x), float(y)] for x, y in s.points]
            fh.write(json.dumps({"frame_id": s.frame_id, "points": pts}) + "\n")


# -- maps and images ------------------------------------------------------------------

def write_raw_map(data: np.ndarray, path: PathLike) -> None:
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 2:
        raise FormatError("raw maps must be 2D")
    with open(path, "wb") as fh:
        fh.write(RAW_HEADER.pack(RAW_MAGIC, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_raw_map(path: PathLike) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < RAW_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, rows, cols = RAW_HEADER.unpack_from(blob)
    if magic != RAW_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = RAW_HEADER.size + 4 * rows * cols
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(blob)}")
    return np.frombuffer(blob, dtype="<f4", offset=RAW_HEADER.size).reshape(rows, cols).astype(np.float64)


def read_map(path: PathLike) -> np.ndarray:
    """Read a 2D map from a raw ``.f32`` file or a grayscale image (values kept as stored)."""
    path = Path(path)
    if path.suffix == ".f32":
        return read_raw_map(path)
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise FormatError(f"{path}: expected a single-channel image")
    return arr.astype(np.float64)


def write_png_map(data: np.ndarray, path: PathLike, bits: int = 8) -> None:
    """Write a map as grayscale PNG, rounding and clipping to the bit depth."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    top = 255 if bits == 8 else 65535
    arr = np.clip(np.rint(data), 0, top).astype(np.uint8 if bits == 8 else np.uint16)
    Image.fromarray(arr).save(path)


def read_image(path: PathLike) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im)


def write_image(arr: np.ndarray, path: PathLike) -> None:
    Image.fromarray(arr).save(path)
