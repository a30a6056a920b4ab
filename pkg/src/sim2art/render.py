"""Cameras and visibility-limited point sampling.

A camera pose is stored camera-to-world with OpenCV axes (+z looking forward,
+y down in the image).  Points are produced by rasterizing the posed part
primitives into a z-buffer, sampling covered pixels and lifting them back to
3D at the stored depth, so only surfaces visible from the camera are sampled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, GenerationError
from .kinematics import forward_kinematics, rotation_about_axis
from .primitives import mesh_parts

WORLD_UP = np.array([0.0, 0.0, 1.0])


def _ro(a):
    a = np.asarray(a, dtype=np.float64).copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CameraPose:
    rotation: np.ndarray      # (3, 3) camera-to-world
    translation: np.ndarray   # (3,) camera center, world frame, meters
    intrinsics: tuple         # (fx, fy, cx, cy) pixels
    resolution: tuple         # (W, H)

    def __post_init__(self):
        object.__setattr__(self, "rotation", _ro(np.reshape(self.rotation, (3, 3))))
        object.__setattr__(self, "translation", _ro(np.reshape(self.translation, 3)))
        object.__setattr__(self, "intrinsics", tuple(float(v) for v in self.intrinsics))
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))
        R = self.rotation
        # tolerance admits float32 round-trips through the on-disk format
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-5 or np.linalg.det(R) < 0:
            raise DomainError("camera rotation must be orthonormal with det +1")
        fx, fy, cx, cy = self.intrinsics
        W, H = self.resolution
        if fx <= 0 or fy <= 0 or not (0 <= cx < W) or not (0 <= cy < H):
            raise DomainError(f"bad intrinsics {self.intrinsics} for resolution {self.resolution}")

    def world_to_cam(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts) - self.translation) @ self.rotation

    def cam_to_world(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts) @ self.rotation.T + self.translation

    def project(self, pts_cam: np.ndarray) -> np.ndarray:
        """Camera-frame points to pixel coordinates (u, v)."""
        fx, fy, cx, cy = self.intrinsics
        z = pts_cam[..., 2]
        return np.stack([fx * pts_cam[..., 0] / z + cx,
                         fy * pts_cam[..., 1] / z + cy], axis=-1)

    def backproject(self, us: np.ndarray, vs: np.ndarray, z: np.ndarray) -> np.ndarray:
        fx, fy, cx, cy = self.intrinsics
        return np.stack([(us - cx) / fx * z, (vs - cy) / fy * z, z], axis=-1)

    @property
    def look_dir(self) -> np.ndarray:
        return self.rotation[:, 2]


def look_at(center: np.ndarray, target: np.ndarray, roll_deg: float,
            intrinsics, resolution) -> CameraPose:
    """Camera at ``center`` looking at ``target`` with a roll about the view axis."""
    z = np.asarray(target, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    nz = np.linalg.norm(z)
    if nz == 0:
        raise DomainError("camera center coincides with look-at target")
    z = z / nz
    x = np.cross(z, WORLD_UP)
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        raise DomainError("camera looking straight along the up axis")
    x = x / nx
    y = np.cross(z, x)
    R = np.stack([x, y, z], axis=1)
    R = R @ rotation_about_axis(np.array([0.0, 0.0, 1.0]), roll_deg)
    return CameraPose(R, center, intrinsics, resolution)


@dataclass(frozen=True)
class CameraParams:
    """Trajectory sampling knobs (distances in multiples of the object radius)."""

    radius_range: tuple = (2.0, 3.5)
    arc_deg_range: tuple = (20.0, 90.0)
    roll_deg: float = 5.0
    elevation_sin_range: tuple = (0.05, 0.95)  # sin(elevation); upper hemisphere
    resolution: int = 256
    fov_deg: float = 70.0


def sample_camera_trajectory(rng: np.random.Generator, T: int,
                             object_radius: float,
                             params: CameraParams = CameraParams(),
                             centroid: np.ndarray = np.zeros(3)) -> list:
    """Circular-arc camera path on the upper hemisphere, always facing the object."""
    if T < 2:
        raise DomainError(f"camera trajectory needs T >= 2, got {T}")
    if object_radius <= 0:
        raise DomainError("object_radius must be positive")
    r = object_radius * rng.uniform(*params.radius_range)
    azim0 = rng.uniform(0.0, 2.0 * np.pi)
    sin_e = rng.uniform(*params.elevation_sin_range)
    elev = np.arcsin(sin_e)
    lo, hi = params.arc_deg_range
    span = np.deg2rad(rng.uniform(lo, hi)) * (1.0 if rng.random() < 0.5 else -1.0)
    roll0 = rng.uniform(-params.roll_deg, params.roll_deg)
    roll1 = rng.uniform(-params.roll_deg, params.roll_deg)

    res = params.resolution
    f = 0.5 * res / np.tan(0.5 * np.deg2rad(params.fov_deg))
    intr = (f, f, res / 2.0, res / 2.0)

    poses = []
    for t in range(T):
        a = t / (T - 1)
        phi = azim0 + span * a
        center = centroid + r * np.array([np.cos(phi) * np.cos(elev),
                                          np.sin(phi) * np.cos(elev),
                                          np.sin(elev)])
        roll = roll0 + (roll1 - roll0) * a
        poses.append(look_at(center, centroid, roll, intr, (res, res)))
    return poses


def render_depth(model, states, camera: CameraPose):
    """Depth and part-id buffers for the model posed by ``states``."""
    R, t = forward_kinematics(model, states)
    verts, tris, tri_part = mesh_parts(model.parts, R, t)
    verts_cam = camera.world_to_cam(verts)
    fx, fy, cx, cy = camera.intrinsics
    W, H = camera.resolution
    return _kernels.rasterize(verts_cam, tris, tri_part, fx, fy, cx, cy, W, H)


def render_sample_points(model, states, camera: CameraPose, n_points: int,
                         rng: np.random.Generator, return_pixels: bool = False):
    """Sample ``n_points`` visible surface points from one view.

    Pixels are drawn uniformly from the covered (object) pixels, without
    replacement when enough are covered.  Each sample is lifted at the pixel
    center using the z-buffer depth; its label is the part *index* owning the
    front-most surface there.
    """
    depth, pid = render_depth(model, states, camera)
    covered = np.flatnonzero(pid.ravel() >= 0)
    if covered.size == 0:
        raise GenerationError("object not visible: no covered pixels")
    replace = covered.size < n_points
    chosen = rng.choice(covered, size=n_points, replace=replace)
    W = camera.resolution[0]
    px = (chosen % W).astype(np.float64)
    py = (chosen // W).astype(np.float64)
    z = depth.ravel()[chosen]
    pts_cam = camera.backproject(px + 0.5, py + 0.5, z)
    part_ids = np.array([p.part_id for p in model.parts], dtype=np.int64)
    labels = part_ids[pid.ravel()[chosen]]
    if return_pixels:
        return pts_cam, labels, np.stack([px, py], axis=1).astype(np.int64)
    return pts_cam, labels
