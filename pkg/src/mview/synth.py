"""Synthetic multi-camera scenes of cylinder pedestrians and intersection localization.

Pedestrians are rendered with the same rectangle model as the occlusion
augmentation, which makes the rendered silhouettes an exact oracle for the
projection and evaluation code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy import ndimage

from mview.augment import CylinderProjector
from mview.evaluation import DetectionSet, GroundTruthSet
from mview.geometry import CameraCalibration, GroundGrid, grid_index_to_world
from mview.warp import CameraImage, ProjectionStack, ScoreMap

WILDTRACK_GRID = dict(origin=(0.0, 0.0), extent=(12.0, 36.0), shape=(120, 360))
WILDTRACK_IMAGE_SIZE = (1920, 1080)


@dataclass(frozen=True)
class Pedestrian:
    grid_index: int
    height_m: float = 1.8
    width_ratio: float = 0.4


@dataclass(frozen=True)
class SceneSpec:
    calibrations: List[CameraCalibration]
    grid: GroundGrid
    pedestrians: List[Pedestrian] = field(default_factory=list)
    background: float = 0.0
    foreground: float = 1.0
    frame_id: int = 0

    def __post_init__(self):
        if self.foreground == self.background:
            raise ValueError("foreground must differ from background")
        for p in self.pedestrians:
            self.grid.index_to_cell(p.grid_index)


def render_scene(spec: SceneSpec) -> Tuple[List[ScoreMap], GroundTruthSet]:
    """Paint every visible pedestrian's rectangle into each camera view."""
    views = []
    for cal in spec.calibrations:
        img = np.full((cal.height, cal.width), spec.background, dtype=np.float64)
        projectors = {}
        for ped in spec.pedestrians:
            proj = projectors.get(ped.height_m)
            if proj is None:
                proj = projectors[ped.height_m] = CylinderProjector(cal, ped.height_m)
            rect = proj.rect(grid_index_to_world(spec.grid, ped.grid_index), ped.width_ratio)
            if rect.visible and rect.bounds is not None:
                r0, r1, c0, c1 = rect.bounds
                img[r0:r1 + 1, c0:c1 + 1] = spec.foreground
        views.append(ScoreMap(img, CameraImage(cal.camera_id)))
    pts = [grid_index_to_world(spec.grid, p.grid_index) for p in spec.pedestrians]
    return views, GroundTruthSet(spec.frame_id, np.array(pts).reshape(-1, 2))


def intersection_localize(
    stack: ProjectionStack,
    threshold: float = 0.0,
    nms_radius: float = 1.0,
    min_score: float = 1.0,
    min_views: int = 2,
    support_size: int = 5,
    frame_id: int = 0,
) -> DetectionSet:
    """Locate pedestrians where silhouettes from many layers overlap.

    Each layer votes on the cells where it exceeds ``threshold``. A cell's
    score is its vote count divided by the number of layers that actually
    see it; cells scoring at least ``min_score`` and seen by at least
    ``min_views`` cameras form candidate regions. Each region contributes
    its highest-count cells, whose centroid (snapped to the closest such
    cell, ties going to the larger summed layer value) becomes the
    candidate. Candidates are then suppressed greedily within
    ``nms_radius`` meters, visiting them by descending count and then by
    the mean vote count in a ``support_size`` box around them.
    """
    grid = stack.grid
    n_heights = len(stack.heights)
    votes = np.zeros(grid.shape, dtype=np.int64)
    mass = np.zeros(grid.shape)
    for layer in stack.layers:
        votes += layer.data > threshold
        mass += layer.data
    if stack.coverage:
        seen = np.sum(stack.coverage, axis=0)
    else:
        seen = np.full(grid.shape, len(stack.layers))
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(seen > 0, votes / np.maximum(seen, 1), 0.0)
    candidates = (score >= min_score) & (votes > 0) & (seen >= min_views * n_heights)

    support = ndimage.uniform_filter(votes.astype(np.float64), size=support_size, mode="constant")
    labels, _ = ndimage.label(candidates)
    peaks = []
    for region, sl in enumerate(ndimage.find_objects(labels), start=1):
        ix, iy = np.nonzero(labels[sl] == region)
        ix, iy = ix + sl[0].start, iy + sl[1].start
        counts = votes[ix, iy]
        top = counts == counts.max()
        ix, iy = ix[top], iy[top]
        cx, cy = ix.mean(), iy.mean()
        # rounding keeps exact ties tied so the summed layer mass decides them
        d2 = np.round((ix - cx) ** 2 + (iy - cy) ** 2, 9)
        k = int(np.lexsort((-mass[ix, iy], d2))[0])
        peaks.append((int(counts.max()), float(support[ix[k], iy[k]]), int(ix[k]), int(iy[k])))

    # descending count, then neighborhood support, then deterministic raster order
    peaks.sort(key=lambda p: (-p[0], -p[1], p[2], p[3]))
    kept: List[np.ndarray] = []
    kept_scores: List[float] = []
    for count, _, ix, iy in peaks:
        xy = grid.cells_to_world(ix, iy)
        if any(np.linalg.norm(xy - k) < nms_radius for k in kept):
            continue
        kept.append(xy)
        kept_scores.append(count / len(stack.layers))
    points = np.array(kept).reshape(-1, 2)
    return DetectionSet(frame_id, points, np.array(kept_scores))


def ring_rig(
    grid: GroundGrid,
    n_cameras: int,
    camera_height: float = 18.0,
    standoff: float = 12.0,
    image_size: Tuple[int, int] = WILDTRACK_IMAGE_SIZE,
    margin: float = 0.05,
    person_height: float = 1.8,
) -> List[CameraCalibration]:
    """Cameras spread around the AOI, each aimed at its center and zoomed to see it whole.

    Camera positions lie on the AOI's bounding rectangle grown by
    ``standoff`` meters, at equal perimeter spacing starting mid-way along
    the first long side. The focal length is the largest that keeps every
    AOI corner, at ground and person height, inside the image with a
    fractional ``margin``.
    """
    ox, oy = grid.origin
    lx, ly = grid.extent
    x0, y0, x1, y1 = ox - standoff, oy - standoff, ox + lx + standoff, oy + ly + standoff
    perim = 2 * ((x1 - x0) + (y1 - y0))
    center = np.array([ox + lx / 2, oy + ly / 2, 0.0])
    corners = np.array(
        [[x, y, z] for x in (ox, ox + lx) for y in (oy, oy + ly) for z in (0.0, person_height)]
    )
    w, h = image_size
    cams = []
    for c in range(n_cameras):
        s = ((c + 0.5) / n_cameras) * perim
        pos = _perimeter_point(s, x0, y0, x1, y1)
        position = np.array([pos[0], pos[1], camera_height])
        probe = CameraCalibration.look_at(c, position, center, 1.0, image_size)
        cam_pts = corners @ probe.rotation.T + probe.translation
        if np.any(cam_pts[:, 2] <= 0):
            raise ValueError("AOI corner behind camera; increase standoff or camera height")
        tan_x = np.max(np.abs(cam_pts[:, 0] / cam_pts[:, 2]))
        tan_y = np.max(np.abs(cam_pts[:, 1] / cam_pts[:, 2]))
        focal = (1.0 - margin) * min((w - 1) / 2 / tan_x, (h - 1) / 2 / tan_y)
        cams.append(CameraCalibration.look_at(c, position, center, focal, image_size))
    return cams


def _perimeter_point(s, x0, y0, x1, y1):
    lx, ly = x1 - x0, y1 - y0
    # start at the middle of the x = x0 side (a long side when ly > lx)
    s = (s + ly / 2) % (2 * (lx + ly))
    if s < ly:
        return x0, y1 - s
    s -= ly
    if s < lx:
        return x0 + s, y0
    s -= lx
    if s < ly:
        return x1, y0 + s
    s -= ly
    return x1 - s, y1


def random_sparse_pedestrians(
    grid: GroundGrid, n: int, min_separation: float, rng: np.random.Generator, max_tries: int = 100000
) -> List[Pedestrian]:
    """Uniformly placed pedestrians with pairwise ground distance >= ``min_separation``."""
    chosen: List[int] = []
    pts: List[np.ndarray] = []
    for _ in range(max_tries):
        if len(chosen) == n:
            break
        k = int(rng.integers(1, grid.size + 1))
        xy = grid_index_to_world(grid, k)
        if all(np.linalg.norm(xy - p) >= min_separation for p in pts):
            chosen.append(k)
            pts.append(xy)
    if len(chosen) < n:
        raise ValueError(f"could only place {len(chosen)} of {n} pedestrians")
    return [Pedestrian(k) for k in chosen]
