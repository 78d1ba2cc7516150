"""Homography warping of 2D maps and the multi-layer top-view projection stack."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from mview.errors import ShapeMismatch, SingularPlane
from mview.geometry import (
    CameraCalibration,
    GroundGrid,
    PlaneHomography,
    build_projection,
    plane_homography,
)

DEFAULT_HEIGHTS = (0.0, 0.15, 0.30, 0.60, 0.90)


@dataclass(frozen=True)
class CameraImage:
    camera_id: int


@dataclass(frozen=True)
class TopView:
    height_m: float


Frame = Union[CameraImage, TopView]


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """A finite 2D scalar map tied to a reference frame."""

    data: np.ndarray
    frame: Optional[Frame] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeMismatch(f"score map must be 2D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("score map contains NaN or Inf")
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape


def _as_matrix(hom) -> np.ndarray:
    if isinstance(hom, PlaneHomography):
        return hom.h_matrix
    return np.asarray(hom, dtype=np.float64).reshape(3, 3)


def sample_bilinear(data: np.ndarray, inv_h: np.ndarray, out_shape) -> Tuple[np.ndarray, np.ndarray]:
    """Inverse-map every output pixel through ``inv_h`` and sample ``data``.

    Output pixel (row r, col c) samples the input at ``inv_h @ (c, r, 1)``.
    Points with non-positive homogeneous w are treated as behind the camera
    and produce 0.

    Returns:
        (values, seen): sampled values of ``out_shape`` and a boolean mask of
        output pixels whose sample point lies in front of the camera and
        inside the input's pixel footprint.
    """
    rows, cols = int(out_shape[0]), int(out_shape[1])
    rr, cc = np.mgrid[0:rows, 0:cols]
    q0 = inv_h[0, 0] * cc + inv_h[0, 1] * rr + inv_h[0, 2]
    q1 = inv_h[1, 0] * cc + inv_h[1, 1] * rr + inv_h[1, 2]
    w = inv_h[2, 0] * cc + inv_h[2, 1] * rr + inv_h[2, 2]
    front = w > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(front, q0 / w, -2.0)
        y = np.where(front, q1 / w, -2.0)
    finite = np.isfinite(x) & np.isfinite(y)
    front &= finite
    x = np.where(front, x, -2.0)
    y = np.where(front, y, -2.0)

    h_in, w_in = data.shape
    seen = front & (x >= -0.5) & (x < w_in - 0.5) & (y >= -0.5) & (y < h_in - 0.5)

    # far-outside samples are clamped just beyond the border so indices stay small
    x = np.clip(x, -2.0, w_in + 1.0)
    y = np.clip(y, -2.0, h_in + 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0

    out = np.zeros((rows, cols), dtype=np.float64)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi = x0 + dx
            yi = y0 + dy
            ok = front & (xi >= 0) & (xi < w_in) & (yi >= 0) & (yi < h_in)
            vals = np.zeros((rows, cols), dtype=np.float64)
            vals[ok] = data[yi[ok], xi[ok]]
            out += wx * wy * vals
    return out, seen


def warp_map(score_map: ScoreMap, hom, out_shape, frame: Optional[Frame] = None) -> ScoreMap:
    """Warp ``score_map`` through the source-to-destination homography ``hom``.

    Each output pixel samples the input at the inverse-mapped location with
    bilinear interpolation; samples outside the input read as 0.
    """
    if min(out_shape) <= 0:
        raise ValueError("out_shape must be positive")
    h = _as_matrix(hom)
    normed = h / np.linalg.norm(h)
    if abs(np.linalg.det(normed)) <= 1e-12:
        raise SingularPlane("homography is not invertible")
    values, _ = sample_bilinear(score_map.data, np.linalg.inv(h), out_shape)
    return ScoreMap(values, frame)


@dataclass(frozen=True, eq=False)
class ProjectionStack:
    """Top-view layers ordered camera-major, height-minor.

    Layer ``c * len(heights) + m`` holds camera ``source_cameras[c]``
    projected onto the plane at ``heights[m]``. ``coverage[k]`` marks the
    top-view cells that layer ``k``'s camera actually sees at that height.
    """

    layers: List[ScoreMap]
    source_cameras: List[int]
    heights: List[float]
    grid: GroundGrid
    coverage: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.layers) != len(self.source_cameras) * len(self.heights):
            raise ShapeMismatch("layer count must equal cameras x heights")
        for layer in self.layers:
            if layer.shape != self.grid.shape:
                raise ShapeMismatch(f"layer shape {layer.shape} != grid shape {self.grid.shape}")

    def layer(self, camera_pos: int, height_pos: int) -> ScoreMap:
        return self.layers[camera_pos * len(self.heights) + height_pos]

    def as_array(self) -> np.ndarray:
        """Concatenated layers, shape (C*M, n_x, n_y)."""
        return np.stack([l.data for l in self.layers])


def top_to_camera_sampler(calib: CameraCalibration, grid: GroundGrid, height_m: float) -> np.ndarray:
    """3x3 map from top-view raster pixels (col, row, 1) to camera pixels at ``height_m``.

    The third output coordinate equals the projective depth, so its sign
    encodes cheirality.
    """
    hom = plane_homography(build_projection(calib), height_m)
    return hom.h_matrix @ grid.pixel_to_world


def project_multilayer(
    per_view_maps: Sequence[ScoreMap],
    calibs: Sequence[CameraCalibration],
    grid: GroundGrid,
    heights: Sequence[float] = DEFAULT_HEIGHTS,
) -> ProjectionStack:
    """Project every camera map onto every parallel plane and concatenate.

    Maps must have the calibration's image resolution; callers resize
    feature maps beforehand.
    """
    if len(per_view_maps) != len(calibs):
        raise ShapeMismatch(f"{len(per_view_maps)} maps for {len(calibs)} cameras")
    if len(heights) == 0:
        raise ValueError("heights must be non-empty")
    layers, coverage = [], []
    for smap, cal in zip(per_view_maps, calibs):
        if smap.shape != (cal.height, cal.width):
            raise ShapeMismatch(
                f"camera {cal.camera_id}: map shape {smap.shape} != image {(cal.height, cal.width)}"
            )
        for h in heights:
            values, seen = sample_bilinear(smap.data, top_to_camera_sampler(cal, grid, h), grid.shape)
            layers.append(ScoreMap(values, TopView(float(h))))
            coverage.append(seen)
    return ProjectionStack(layers, [c.camera_id for c in calibs], [float(h) for h in heights], grid, coverage)
