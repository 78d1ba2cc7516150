"""Ground-truth occupancy / head / foot maps, Gaussian targets and map losses.

The losses are plain numpy evaluations for checking third-party training
pipelines offline; nothing here is differentiable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import correlate1d

from mview.errors import EmptyViewList, OutOfGrid, ShapeMismatch
from mview.geometry import GroundGrid
from mview.warp import CameraImage, ScoreMap, TopView

TOP_VIEW_SIGMA = 3.0
SINGLE_VIEW_SIGMA = 5.0


@dataclass(frozen=True)
class ViewAnnotation:
    camera_id: int
    head: Optional[Tuple[float, float]]
    foot: Optional[Tuple[float, float]]
    visible: bool = True


@dataclass(frozen=True)
class PedestrianAnnotation:
    person_id: int
    grid_index: int
    views: List[ViewAnnotation] = field(default_factory=list)


@dataclass(frozen=True)
class AnnotationFrame:
    frame_id: int
    pedestrians: List[PedestrianAnnotation] = field(default_factory=list)


@dataclass(frozen=True)
class GaussianSpec:
    """Truncated Gaussian target kernel.

    ``normalize`` is ``"sum"`` (unit mass) or ``"peak"`` (unit center weight).
    """

    sigma: float
    truncation_radius: Optional[int] = None
    normalize: str = "sum"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.truncation_radius is None:
            object.__setattr__(self, "truncation_radius", int(math.ceil(3 * self.sigma)))
        if self.truncation_radius < 0:
            raise ValueError("truncation_radius must be >= 0")
        if self.normalize not in ("sum", "peak"):
            raise ValueError("normalize must be 'sum' or 'peak'")

    def kernel_1d(self) -> np.ndarray:
        r = self.truncation_radius
        x = np.arange(-r, r + 1, dtype=np.float64)
        k = np.exp(-0.5 * (x / self.sigma) ** 2)
        # separable: the 2D kernel is outer(k, k), so unit peak / unit sum carry over per axis
        return k / k.sum() if self.normalize == "sum" else k

    def kernel_2d(self) -> np.ndarray:
        k = self.kernel_1d()
        return np.outer(k, k)


def occupancy_map(frame: AnnotationFrame, grid: GroundGrid) -> ScoreMap:
    """Binary top-view occupancy: 1.0 on every occupied cell."""
    out = np.zeros(grid.shape)
    for ped in frame.pedestrians:
        try:
            ix, iy = grid.index_to_cell(ped.grid_index)
        except OutOfGrid as exc:
            raise OutOfGrid(f"frame {frame.frame_id}, person {ped.person_id}: {exc}") from None
        out[ix, iy] = 1.0
    return ScoreMap(out, TopView(0.0))


def view_point_maps(frame: AnnotationFrame, camera_id: int, image_shape) -> Tuple[ScoreMap, ScoreMap]:
    """Head and foot location maps of one view (1.0 at the rounded annotated pixel)."""
    head = np.zeros(image_shape)
    foot = np.zeros(image_shape)
    rows, cols = image_shape
    for ped in frame.pedestrians:
        for view in ped.views:
            if view.camera_id != camera_id or not view.visible:
                continue
            for target, pt in ((head, view.head), (foot, view.foot)):
                if pt is None:
                    continue
                c, r = int(round(pt[0])), int(round(pt[1]))
                if 0 <= r < rows and 0 <= c < cols:
                    target[r, c] = 1.0
    frame_ref = CameraImage(camera_id)
    return ScoreMap(head, frame_ref), ScoreMap(foot, frame_ref)


def gaussian_blur(score_map: ScoreMap, spec: GaussianSpec) -> ScoreMap:
    """Separable truncated-Gaussian convolution with zero-padded borders."""
    k = spec.kernel_1d()
    # the kernel is symmetric, so correlation equals convolution
    out = correlate1d(score_map.data, k, axis=0, mode="constant", cval=0.0)
    out = correlate1d(out, k, axis=1, mode="constant", cval=0.0)
    return ScoreMap(out, score_map.frame)


def _check_shapes(*maps: ScoreMap):
    shapes = {m.shape for m in maps}
    if len(shapes) != 1:
        raise ShapeMismatch(f"map shapes disagree: {sorted(shapes)}")


def loss_topview(pred: ScoreMap, gt: ScoreMap, spec: GaussianSpec) -> float:
    """Euclidean distance between the prediction and the blurred occupancy map."""
    _check_shapes(pred, gt)
    return float(np.linalg.norm(pred.data - gaussian_blur(gt, spec).data))


def loss_single_view(
    pred_head: ScoreMap, pred_foot: ScoreMap, gt_head: ScoreMap, gt_foot: ScoreMap, spec: GaussianSpec
) -> float:
    _check_shapes(pred_head, gt_head)
    _check_shapes(pred_foot, gt_foot)
    head = np.linalg.norm(pred_head.data - gaussian_blur(gt_head, spec).data)
    foot = np.linalg.norm(pred_foot.data - gaussian_blur(gt_foot, spec).data)
    return float(head + foot)


def loss_overall(top_loss: float, single_losses: Sequence[float]) -> float:
    """Top-view loss plus the mean of the per-view losses."""
    if len(single_losses) == 0:
        raise EmptyViewList("at least one view loss is required")
    return float(top_loss + sum(single_losses) / len(single_losses))
