"""In-memory sequence containers shared by the generator, featurizer and I/O."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass
class PointCloudSequence:
    """T frames of sampled surface points, all expressed in the first camera's frame.

    ``flow`` holds the per-point displacement to the next frame (last frame is
    zero by convention), ``semfeat`` the 3-d semantic surrogate, ``labels``
    the ground-truth part id of every point.
    """

    points: np.ndarray    # (T, N, 3) float64, meters
    flow: np.ndarray      # (T, N, 3) float64, meters
    semfeat: np.ndarray   # (T, N, 3) float64
    labels: np.ndarray    # (T, N) int
    cameras: list         # T CameraPose

    def __post_init__(self):
        T, N, _ = self.points.shape
        for name in ("flow", "semfeat"):
            if getattr(self, name).shape != (T, N, 3):
                raise DomainError(f"{name} shape {getattr(self, name).shape} != {(T, N, 3)}")
        if self.labels.shape != (T, N):
            raise DomainError(f"labels shape {self.labels.shape} != {(T, N)}")
        if len(self.cameras) != T:
            raise DomainError(f"expected {T} cameras, got {len(self.cameras)}")

    @property
    def num_frames(self) -> int:
        return self.points.shape[0]

    @property
    def num_points(self) -> int:
        return self.points.shape[1]


@dataclass
class GroundTruthAnnotation:
    """Per-part supervision: binary masks, joint parameters and motion amounts.

    Axes and pivots are expressed in the first-camera frame like the points.
    Motion is cumulative relative to frame 0 (degrees for revolute parts,
    centimeters for prismatic, all-zero rows for static parts).
    """

    part_masks: np.ndarray   # (M, T, N) bool
    joint_types: np.ndarray  # (M,) int, values of kinematics.JointType
    axes: np.ndarray         # (M, 3) unit rows for non-static parts, zero otherwise
    pivots: np.ndarray       # (M, 3) meters, meaningful for revolute parts
    motion: np.ndarray       # (M, T) float64

    def __post_init__(self):
        M, T, N = self.part_masks.shape
        if self.joint_types.shape != (M,) or self.axes.shape != (M, 3) \
                or self.pivots.shape != (M, 3) or self.motion.shape != (M, T):
            raise DomainError("annotation field shapes disagree")
        owners = self.part_masks.sum(axis=0)
        if not np.all(owners == 1):
            raise DomainError("part masks must partition the points")

    @property
    def num_parts(self) -> int:
        return self.part_masks.shape[0]
