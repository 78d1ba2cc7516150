"""3D random occlusion: virtual cylinders painted consistently into every view.

A cylinder of pedestrian height standing on a grid location is projected into
each camera through the ground-plane and head-plane homographies. Its image
footprint is the upright rectangle between the projected foot and head rows,
horizontally centered on the foot pixel, with width ``alpha * height_px``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from mview.errors import PlacementExhausted, SizeMismatch
from mview.geometry import (
    CameraCalibration,
    GroundGrid,
    PlaneHomography,
    build_projection,
    grid_index_to_world,
    plane_homography,
)

logger = logging.getLogger(__name__)

FillValue = Union[int, float, Sequence[float]]


@dataclass(frozen=True)
class OcclusionConfig:
    n_occlusions: int = 25
    probability_p: float = 1.0
    min_separation_d: float = 1.0
    pedestrian_height_ha: float = 1.8
    width_ratio_alpha: float = 0.4
    fill_value_omega: FillValue = 0
    rng_seed: int = 0
    max_rejections: int = 10000

    def __post_init__(self):
        if not 0.0 <= self.probability_p <= 1.0:
            raise ValueError("probability_p must lie in [0, 1]")
        if self.n_occlusions < 0:
            raise ValueError("n_occlusions must be >= 0")
        if self.min_separation_d <= 0:
            raise ValueError("min_separation_d must be > 0")
        if not 0.0 < self.width_ratio_alpha < 1.0:
            raise ValueError("width_ratio_alpha must lie in (0, 1)")
        if self.pedestrian_height_ha <= 0:
            raise ValueError("pedestrian_height_ha must be > 0")
        if self.max_rejections < 1:
            raise ValueError("max_rejections must be >= 1")


@dataclass(frozen=True)
class ViewRect:
    """Projection of one cylinder into one camera view (pixel units)."""

    camera_id: int
    u_foot: float
    v_foot: float
    v_head: float
    height_px: float
    width_px: float
    clipped: bool
    visible: bool
    # inclusive pixel bounds after clipping: (row0, row1, col0, col1); None if nothing to paint
    bounds: Optional[Tuple[int, int, int, int]] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bounds"] = list(self.bounds) if self.bounds is not None else None
        return d


@dataclass(frozen=True)
class OcclusionRecord:
    grid_index: int
    world_xy: Tuple[float, float]
    per_view_rect: List[ViewRect] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "grid_index": self.grid_index,
            "world_xy": list(self.world_xy),
            "views": [r.to_dict() for r in self.per_view_rect],
        }


class CylinderProjector:
    """Caches the foot/head homographies of one camera for repeated projection."""

    def __init__(self, calib: CameraCalibration, height_m: float):
        self.calib = calib
        proj = build_projection(calib)
        self.foot: PlaneHomography = plane_homography(proj, 0.0)
        self.head: Optional[PlaneHomography] = plane_homography(proj, height_m) if height_m != 0 else None

    def rect(self, world_xy, width_ratio: float) -> ViewRect:
        return project_cylinder(self.calib, world_xy, width_ratio, self.foot, self.head)


def project_cylinder(
    calib: CameraCalibration,
    world_xy,
    width_ratio: float,
    foot_hom: PlaneHomography,
    head_hom: Optional[PlaneHomography],
) -> ViewRect:
    """Rectangle of a cylinder standing at ``world_xy`` in ``calib``'s view.

    ``head_hom`` is the top-to-camera homography of the head plane; ``None``
    means a zero-height cylinder, which paints nothing.
    """
    xy = np.asarray(world_xy, dtype=np.float64).reshape(1, 2)
    (foot,), (w_foot,) = foot_hom.apply(xy)
    if head_hom is None:
        head, w_head = foot, w_foot
    else:
        (head,), (w_head,) = head_hom.apply(xy)
    width, height = calib.image_size

    if w_foot <= 0 or w_head <= 0:
        return ViewRect(calib.camera_id, math.nan, math.nan, math.nan, 0.0, 0.0, False, False)

    u, v = float(foot[0]), float(foot[1])
    v_head = float(head[1])
    height_px = abs(v - v_head)
    width_px = width_ratio * height_px
    foot_inside = -0.5 <= u < width - 0.5 and -0.5 <= v < height - 0.5
    if not foot_inside or height_px <= 0:
        return ViewRect(calib.camera_id, u, v, v_head, height_px, width_px, False, False)

    r0, r1 = math.ceil(min(v, v_head)), math.floor(max(v, v_head))
    c0, c1 = math.ceil(u - width_px / 2), math.floor(u + width_px / 2)
    clipped = r0 < 0 or c0 < 0 or r1 > height - 1 or c1 > width - 1
    r0, c0 = max(r0, 0), max(c0, 0)
    r1, c1 = min(r1, height - 1), min(c1, width - 1)
    bounds = (r0, r1, c0, c1) if r0 <= r1 and c0 <= c1 else None
    return ViewRect(calib.camera_id, u, v, v_head, height_px, width_px, clipped, True, bounds)


def rect_for_location(
    calibs: Sequence[CameraCalibration], grid: GroundGrid, i: int, config: OcclusionConfig
) -> List[ViewRect]:
    """Per-view rectangles of an occluder placed at grid location ``i``."""
    xy = grid_index_to_world(grid, i)
    return [
        CylinderProjector(c, config.pedestrian_height_ha).rect(xy, config.width_ratio_alpha)
        for c in calibs
    ]


def paint_rect(image: np.ndarray, rect: ViewRect, value) -> None:
    """Fill ``rect`` in-place with a constant value."""
    if not rect.visible or rect.bounds is None:
        return
    r0, r1, c0, c1 = rect.bounds
    image[r0:r1 + 1, c0:c1 + 1] = value


def sample_locations(grid: GroundGrid, config: OcclusionConfig, rng: np.random.Generator) -> List[int]:
    """Draw ``n`` grid indices uniformly, rejecting any closer than ``d`` to an accepted one."""
    accepted: List[int] = []
    points = np.empty((config.n_occlusions, 2))
    rejections = 0
    while len(accepted) < config.n_occlusions:
        # rng.integers upper bound is exclusive
        k = int(rng.integers(1, grid.size + 1))
        xk = grid_index_to_world(grid, k)
        n = len(accepted)
        if n and np.min(np.linalg.norm(points[:n] - xk, axis=1)) < config.min_separation_d:
            rejections += 1
            if rejections >= config.max_rejections:
                raise PlacementExhausted(
                    f"placed {n} of {config.n_occlusions} occlusions before "
                    f"{config.max_rejections} consecutive rejections"
                )
            continue
        rejections = 0
        points[n] = xk
        accepted.append(k)
    return accepted


def occlude_frame(
    images: Sequence[np.ndarray],
    calibs: Sequence[CameraCalibration],
    grid: GroundGrid,
    config: OcclusionConfig,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[List[np.ndarray], List[OcclusionRecord]]:
    """Apply 3D random occlusion to all views of one frame.

    Args:
        images: one array per camera, shape (height, width) or (height, width, channels).
        calibs: calibrations in the same order as ``images``.
        grid: ground grid the occluders are placed on.
        config: occlusion parameters.
        rng: generator to draw from; defaults to one seeded with ``config.rng_seed``.

    Returns:
        The occluded copies and one record per placed occluder. The inputs are
        never modified.
    """
    if len(images) != len(calibs):
        raise SizeMismatch(f"{len(images)} images for {len(calibs)} calibrations")
    for img, cal in zip(images, calibs):
        if img.shape[:2] != (cal.height, cal.width):
            raise SizeMismatch(
                f"camera {cal.camera_id}: image shape {img.shape[:2]} != calibration {(cal.height, cal.width)}"
            )
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)

    out = [np.array(img, copy=True) for img in images]
    if rng.random() >= config.probability_p:
        return out, []

    indices = sample_locations(grid, config, rng)
    projectors = [CylinderProjector(c, config.pedestrian_height_ha) for c in calibs]
    records = []
    for k in indices:
        xy = grid_index_to_world(grid, k)
        rects = [p.rect(xy, config.width_ratio_alpha) for p in projectors]
        for img, rect in zip(out, rects):
            paint_rect(img, rect, config.fill_value_omega)
        records.append(OcclusionRecord(k, (float(xy[0]), float(xy[1])), rects))
    logger.debug("placed %d occlusions", len(records))
    return out, records
