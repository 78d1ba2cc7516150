"""Pinhole camera model, projection matrices and plane homographies.

Coordinate conventions:
    - World frame: X, Y span the ground plane, Z points up (meters).
    - Camera frame: x right, y down, z forward (standard CV).
    - Image frame: origin at the top-left pixel center, u right, v down.

All top-view homographies act on *metric* homogeneous world coordinates
``(X, Y, 1)``. Use :meth:`GroundGrid.pixel_to_world` to go between the
top-view raster and metric coordinates.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from mview.errors import InvalidCalibration, OutOfGrid, SingularPlane

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-6
# |det| threshold for a Frobenius-normalized 3x3 homography.
SINGULAR_DET_TOL = 1e-12


def _frozen(a, shape, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype).reshape(shape)
    arr.setflags(write=False)
    return arr


class Direction(enum.Enum):
    TOP_TO_CAM = "top_to_cam"
    CAM_TO_TOP = "cam_to_top"

    def flipped(self) -> "Direction":
        return Direction.CAM_TO_TOP if self is Direction.TOP_TO_CAM else Direction.TOP_TO_CAM


@dataclass(frozen=True, eq=False)
class CameraCalibration:
    """Intrinsics and extrinsics of one pre-rectified pinhole camera.

    ``rotation`` and ``translation`` map world points into the camera frame:
    ``x_cam = R @ X_world + t``.
    """

    camera_id: int
    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image_size: Tuple[int, int]  # (width, height)

    def __post_init__(self):
        K = _frozen(self.intrinsics, (3, 3))
        R = _frozen(self.rotation, (3, 3))
        t = _frozen(self.translation, (3,))
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))
        object.__setattr__(self, "camera_id", int(self.camera_id))

        if not (np.all(np.isfinite(K)) and np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise InvalidCalibration(f"camera {self.camera_id}: non-finite calibration entries")
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHONORMAL_TOL or abs(np.linalg.det(R) - 1.0) > ORTHONORMAL_TOL:
            raise InvalidCalibration(f"camera {self.camera_id}: rotation is not orthonormal with det +1")
        if np.any(np.tril(K, -1) != 0.0):
            raise InvalidCalibration(f"camera {self.camera_id}: intrinsics must be upper-triangular")
        if K[0, 0] <= 0 or K[1, 1] <= 0 or K[2, 2] <= 0:
            raise InvalidCalibration(f"camera {self.camera_id}: focal entries must be strictly positive")
        if self.image_size[0] <= 0 or self.image_size[1] <= 0:
            raise InvalidCalibration(f"camera {self.camera_id}: image_size must be positive")

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @classmethod
    def look_at(cls, camera_id, position, target, focal, image_size, up=(0.0, 0.0, 1.0)):
        """Build a camera at ``position`` whose optical axis points at ``target``.

        The principal point is placed at the image center.
        """
        position = np.asarray(position, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - position
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-12:
            raise InvalidCalibration("look_at: viewing direction parallel to up vector")
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        R = np.stack([right, down, forward])
        w, h = image_size
        K = np.array([[focal, 0.0, (w - 1) / 2.0], [0.0, focal, (h - 1) / 2.0], [0.0, 0.0, 1.0]])
        return cls(camera_id, K, R, -R @ position, image_size)


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    """3x4 matrix ``M = K [R | t]`` with columns ``m1..m4``."""

    m: np.ndarray
    camera_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "m", _frozen(self.m, (3, 4)))
        if np.linalg.matrix_rank(self.m) != 3:
            raise InvalidCalibration("projection matrix must have rank 3")

    @property
    def m1(self) -> np.ndarray:
        return self.m[:, 0]

    @property
    def m2(self) -> np.ndarray:
        return self.m[:, 1]

    @property
    def m3(self) -> np.ndarray:
        return self.m[:, 2]

    @property
    def m4(self) -> np.ndarray:
        return self.m[:, 3]

    def project(self, points):
        """Project world points of shape (N, 3).

        Returns:
            (pixels, depth): pixels of shape (N, 2) and the projective depth
            (third homogeneous coordinate) of shape (N,). Points with
            ``depth <= 0`` are behind the camera; their pixels are not
            meaningful.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        homo = pts @ self.m[:, :3].T + self.m4
        w = homo[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = homo[:, :2] / w[:, None]
        return uv, w


def build_projection(calib: CameraCalibration) -> ProjectionMatrix:
    """Return ``K [R | t]`` for a validated calibration."""
    Rt = np.hstack([calib.rotation, calib.translation[:, None]])
    return ProjectionMatrix(calib.intrinsics @ Rt, calib.camera_id)


@dataclass(frozen=True, eq=False)
class PlaneHomography:
    """Homography between the top view at ``height`` and one camera image.

    ``h_matrix`` keeps the raw (unnormalized) scale, so the sign of the third
    homogeneous coordinate produced by a TOP_TO_CAM matrix is the projective
    depth of the world point. Use :attr:`normalized` for up-to-scale
    comparisons.
    """

    h_matrix: np.ndarray
    height: float
    direction: Direction
    camera_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "h_matrix", _frozen(self.h_matrix, (3, 3)))
        object.__setattr__(self, "height", float(self.height))

    @property
    def normalized(self) -> np.ndarray:
        return self.h_matrix / np.linalg.norm(self.h_matrix)

    def inverse(self) -> "PlaneHomography":
        return PlaneHomography(np.linalg.inv(self.h_matrix), self.height, self.direction.flipped(), self.camera_id)

    def apply(self, points):
        """Map 2D points of shape (N, 2); returns (mapped (N, 2), homogeneous w (N,))."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        homo = pts @ self.h_matrix[:, :2].T + self.h_matrix[:, 2]
        w = homo[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = homo[:, :2] / w[:, None]
        return out, w


def _check_plane(h_top_to_cam: np.ndarray, height: float, camera_id: int):
    normed = h_top_to_cam / np.linalg.norm(h_top_to_cam)
    if abs(np.linalg.det(normed)) <= SINGULAR_DET_TOL:
        raise SingularPlane(f"camera {camera_id}: plane at height {height} m passes through the camera center")


def plane_homography(proj: ProjectionMatrix, height_m: float, direction: Direction = Direction.TOP_TO_CAM) -> PlaneHomography:
    """Homography for the plane parallel to the ground at ``height_m``.

    TOP_TO_CAM is ``[m1, m2, h*m3 + m4]``; CAM_TO_TOP is its inverse.
    """
    height_m = float(height_m)
    if not np.isfinite(height_m):
        raise ValueError("height must be finite")
    offset = np.zeros((3, 3))
    offset[:, 2] = height_m * proj.m3
    h = np.column_stack([proj.m1, proj.m2, proj.m4]) + offset
    _check_plane(h, height_m, proj.camera_id)
    hom = PlaneHomography(h, height_m, Direction.TOP_TO_CAM, proj.camera_id)
    if direction is Direction.CAM_TO_TOP:
        return hom.inverse()
    return hom


def ground_homography(proj: ProjectionMatrix, direction: Direction = Direction.TOP_TO_CAM) -> PlaneHomography:
    """Ground-plane homography ``[m1, m2, m4]`` (or its inverse)."""
    h = np.column_stack([proj.m1, proj.m2, proj.m4])
    _check_plane(h, 0.0, proj.camera_id)
    hom = PlaneHomography(h, 0.0, Direction.TOP_TO_CAM, proj.camera_id)
    return hom.inverse() if direction is Direction.CAM_TO_TOP else hom


@dataclass(frozen=True, eq=False)
class GroundGrid:
    """Discretized area of interest on the ground plane.

    Cell ``(ix, iy)`` has its center at
    ``origin + ((ix + 0.5) * cx, (iy + 0.5) * cy)``; top-view rasters have
    shape ``(n_x, n_y)`` so rows follow world X and columns follow world Y.
    Flat indices are 1-based and row-major: ``i = ix * n_y + iy + 1``.
    """

    origin: np.ndarray
    extent: Tuple[float, float]
    shape: Tuple[int, int]
    cell_size: Tuple[float, float] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "origin", _frozen(self.origin, (2,)))
        object.__setattr__(self, "extent", (float(self.extent[0]), float(self.extent[1])))
        object.__setattr__(self, "shape", (int(self.shape[0]), int(self.shape[1])))
        if min(self.extent) <= 0 or min(self.shape) <= 0:
            raise ValueError("grid extent and shape must be positive")
        object.__setattr__(self, "cell_size", (self.extent[0] / self.shape[0], self.extent[1] / self.shape[1]))

    @property
    def size(self) -> int:
        """Number of locations G."""
        return self.shape[0] * self.shape[1]

    @property
    def pixel_to_world(self) -> np.ndarray:
        """3x3 affine map from top-view raster coordinates (col, row, 1) to world (X, Y, 1)."""
        cx, cy = self.cell_size
        ox, oy = self.origin
        return np.array([[0.0, cx, ox + 0.5 * cx], [cy, 0.0, oy + 0.5 * cy], [0.0, 0.0, 1.0]])

    def cell_centers(self) -> np.ndarray:
        """World coordinates of all G cell centers in flat-index order, shape (G, 2)."""
        ix, iy = np.unravel_index(np.arange(self.size), self.shape)
        return self.cells_to_world(ix, iy)

    def cells_to_world(self, ix, iy) -> np.ndarray:
        ix = np.asarray(ix, dtype=np.float64)
        iy = np.asarray(iy, dtype=np.float64)
        x = self.origin[0] + (ix + 0.5) * self.cell_size[0]
        y = self.origin[1] + (iy + 0.5) * self.cell_size[1]
        return np.stack([x, y], axis=-1)

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64)) - self.origin
        tol = 1e-9
        return (
            (p[:, 0] >= -tol) & (p[:, 0] <= self.extent[0] + tol)
            & (p[:, 1] >= -tol) & (p[:, 1] <= self.extent[1] + tol)
        )

    def world_to_cell(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Cell row/column for world points (N, 2); points must lie inside the AOI."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if not np.all(self.contains(p)):
            raise OutOfGrid("point outside the area of interest")
        rel = p - self.origin
        ix = np.clip(np.floor(rel[:, 0] / self.cell_size[0]).astype(int), 0, self.shape[0] - 1)
        iy = np.clip(np.floor(rel[:, 1] / self.cell_size[1]).astype(int), 0, self.shape[1] - 1)
        return ix, iy

    def index_to_cell(self, i: int) -> Tuple[int, int]:
        i = int(i)
        if not 1 <= i <= self.size:
            raise OutOfGrid(f"grid index {i} outside [1, {self.size}]")
        return divmod(i - 1, self.shape[1])


def grid_index_to_world(grid: GroundGrid, i: int) -> np.ndarray:
    ix, iy = grid.index_to_cell(i)
    return grid.cells_to_world(ix, iy)


def world_to_grid_index(grid: GroundGrid, p: Sequence[float]) -> int:
    ix, iy = grid.world_to_cell(p)
    return int(ix[0]) * grid.shape[1] + int(iy[0]) + 1
