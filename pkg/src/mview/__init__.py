"""Multi-view geometry toolkit for multi-camera pedestrian localization.

Plane homographies, 3D random occlusion augmentation, multi-layer top-view
projection, occupancy ground truth and losses, and ground-plane detection
metrics.
"""

from mview.errors import (
    EmptyViewList,
    FormatError,
    FrameMismatch,
    InvalidCalibration,
    MviewError,
    OutOfGrid,
    PlacementExhausted,
    ShapeMismatch,
    SingularPlane,
    SizeMismatch,
)
from mview.geometry import (
    CameraCalibration,
    Direction,
    GroundGrid,
    PlaneHomography,
    ProjectionMatrix,
    build_projection,
    ground_homography,
    grid_index_to_world,
    plane_homography,
    world_to_grid_index,
)

__version__ = "0.1.0"

__all__ = [
    "CameraCalibration",
    "Direction",
    "EmptyViewList",
    "FormatError",
    "FrameMismatch",
    "GroundGrid",
    "InvalidCalibration",
    "MviewError",
    "OutOfGrid",
    "PlacementExhausted",
    "PlaneHomography",
    "ProjectionMatrix",
    "ShapeMismatch",
    "SingularPlane",
    "SizeMismatch",
    "build_projection",
    "ground_homography",
    "grid_index_to_world",
    "plane_homography",
    "world_to_grid_index",
]
