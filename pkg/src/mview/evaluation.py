"""Ground-plane detection metrics: thresholded Hungarian matching and MODA/MODP."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from mview.errors import FrameMismatch
from mview.geometry import GroundGrid

DEFAULT_RADIUS = 0.5


@dataclass(frozen=True)
class DetectionSet:
    frame_id: int
    points: np.ndarray  # (N, 2) meters
    scores: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"frame {self.frame_id}: non-finite detection coordinates")
        object.__setattr__(self, "points", pts)
        scores = np.ones(len(pts)) if self.scores is None else np.asarray(self.scores, dtype=np.float64)
        if scores.shape != (len(pts),) or not np.all(np.isfinite(scores)):
            raise ValueError(f"frame {self.frame_id}: scores must be finite, one per point")
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True)
class GroundTruthSet:
    frame_id: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"frame {self.frame_id}: non-finite ground-truth coordinates")
        object.__setattr__(self, "points", pts)


@dataclass
class FrameResult:
    frame_id: int
    tp: int
    fp: int
    fn: int
    distances: List[float] = field(default_factory=list)


@dataclass
class Metrics:
    tp: int
    fp: int
    fn: int
    moda: float
    modp: float
    precision: float
    recall: float


@dataclass
class EvalReport:
    radius: float
    frames: List[FrameResult]
    aggregate: Metrics

    def to_dict(self, decimals: int = 4) -> dict:
        agg = asdict(self.aggregate)
        for key in ("moda", "modp", "precision", "recall"):
            agg[key] = round(agg[key], decimals)
        return {
            "radius": self.radius,
            "aggregate": agg,
            "frames": [
                {"frame_id": f.frame_id, "tp": f.tp, "fp": f.fp, "fn": f.fn} for f in self.frames
            ],
        }


def match_frame(det: DetectionSet, gt: GroundTruthSet, r: float = DEFAULT_RADIUS) -> List[Tuple[int, int, float]]:
    """One-to-one matching of detections to ground truth within radius ``r``.

    Among all matchings that only use pairs within ``r``, returns one with
    the most pairs and, among those, the smallest total distance.

    Returns:
        (det_idx, gt_idx, distance) triples sorted by det_idx.
    """
    if not r > 0:
        raise ValueError("match radius must be > 0")
    if len(det.points) == 0 or len(gt.points) == 0:
        return []
    dist = np.linalg.norm(det.points[:, None, :] - gt.points[None, :, :], axis=2)
    feasible = dist <= r
    if not feasible.any():
        return []
    # Any infeasible pair costs more than every feasible matching combined,
    # so the solver first maximizes the number of feasible pairs.
    big = (min(dist.shape) + 1) * r + 1.0
    cost = np.where(feasible, dist, big)
    rows, cols = linear_sum_assignment(cost)
    return [(int(i), int(j), float(dist[i, j])) for i, j in zip(rows, cols) if feasible[i, j]]


def metrics_from_counts(tp: int, fp: int, fn: int, quality_sum: float) -> Metrics:
    """Pooled metrics from counts.

    ``quality_sum`` is the sum of ``1 - d / r`` over matched pairs.
    """
    n_gt = tp + fn
    n_det = tp + fp
    moda = 1.0 - (fp + fn) / n_gt if n_gt > 0 else (1.0 if fp == 0 else 1.0 - fp)
    modp = quality_sum / tp if tp > 0 else 0.0
    if n_det > 0:
        precision = tp / n_det
    else:
        precision = 1.0 if n_gt == 0 else 0.0
    recall = tp / n_gt if n_gt > 0 else 1.0
    return Metrics(tp, fp, fn, moda, modp, precision, recall)


def filter_to_aoi(points: np.ndarray, grid: GroundGrid) -> np.ndarray:
    if len(points) == 0:
        return points
    return points[grid.contains(points)]


def score_frames(
    frames: Sequence[Tuple[DetectionSet, GroundTruthSet]],
    r: float = DEFAULT_RADIUS,
    aoi: Optional[GroundGrid] = None,
) -> EvalReport:
    """Match every frame and pool the counts into one report.

    When ``aoi`` is given, detections and ground truth outside it are
    dropped before matching.
    """
    results = []
    tp = fp = fn = 0
    quality = []
    for det, gt in frames:
        if det.frame_id != gt.frame_id:
            raise FrameMismatch(f"detection frame {det.frame_id} paired with ground truth frame {gt.frame_id}")
        if aoi is not None:
            det = DetectionSet(det.frame_id, filter_to_aoi(det.points, aoi))
            gt = GroundTruthSet(gt.frame_id, filter_to_aoi(gt.points, aoi))
        matches = match_frame(det, gt, r)
        n_tp = len(matches)
        res = FrameResult(det.frame_id, n_tp, len(det.points) - n_tp, len(gt.points) - n_tp, [m[2] for m in matches])
        results.append(res)
        tp += res.tp
        fp += res.fp
        fn += res.fn
        quality.extend(1.0 - d / r for d in res.distances)
    return EvalReport(r, results, metrics_from_counts(tp, fp, fn, math.fsum(quality)))
