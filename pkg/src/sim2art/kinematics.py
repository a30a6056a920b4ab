"""Articulated-object structure and exact rigid part motion.

Objects are single-level kinematic trees: one static base part plus movable
parts that each articulate relative to the base through a revolute or
prismatic joint.  Geometry lives in meters; revolute states are degrees and
prismatic states are centimeters, matching the units used for reporting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import DomainError

UNIT_AXIS_TOL = 1e-9
# slack when validating joint states against limits (pure float safety)
LIMIT_EPS = 1e-9


class JointType(IntEnum):
    REVOLUTE = 0
    PRISMATIC = 1
    STATIC = 2


def _as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(3).copy()
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class JointSpec:
    """One degree of freedom: type, direction, pivot and travel limits.

    ``axis`` is a unit direction.  ``pivot`` is an object-frame point in
    meters and is only meaningful for revolute joints.  Limits are degrees
    (revolute) or centimeters (prismatic); both zero for static joints.
    """

    joint_type: JointType
    axis: np.ndarray = field(default_factory=lambda: _as_vec3([0.0, 0.0, 1.0]))
    pivot: np.ndarray = field(default_factory=lambda: _as_vec3([0.0, 0.0, 0.0]))
    limit_lo: float = 0.0
    limit_hi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "joint_type", JointType(self.joint_type))
        object.__setattr__(self, "axis", _as_vec3(self.axis))
        object.__setattr__(self, "pivot", _as_vec3(self.pivot))
        object.__setattr__(self, "limit_lo", float(self.limit_lo))
        object.__setattr__(self, "limit_hi", float(self.limit_hi))
        if self.limit_lo > self.limit_hi:
            raise DomainError(f"joint limits inverted: [{self.limit_lo}, {self.limit_hi}]")
        if self.joint_type == JointType.STATIC:
            if self.limit_lo != 0.0 or self.limit_hi != 0.0:
                raise DomainError("static joints must have zero limits")
        else:
            norm = float(np.linalg.norm(self.axis))
            if abs(norm - 1.0) > UNIT_AXIS_TOL:
                raise DomainError(f"joint axis must be unit length, got |a| = {norm!r}")

    @property
    def is_static(self) -> bool:
        return self.joint_type == JointType.STATIC

    def to_dict(self) -> dict:
        return {
            "joint_type": int(self.joint_type),
            "axis": self.axis.tolist(),
            "pivot": self.pivot.tolist(),
            "limit_lo": self.limit_lo,
            "limit_hi": self.limit_hi,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JointSpec":
        return cls(JointType(d["joint_type"]), d["axis"], d["pivot"],
                   d["limit_lo"], d["limit_hi"])

    @classmethod
    def static(cls) -> "JointSpec":
        return cls(JointType.STATIC)


@dataclass(frozen=True)
class PartSpec:
    """A rigid part: id, primitive geometry (part frame, meters) and its joint."""

    part_id: int
    geometry: tuple  # of scenegen primitives (Box / Cylinder)
    joint: JointSpec

    def __post_init__(self):
        object.__setattr__(self, "geometry", tuple(self.geometry))
        if len(self.geometry) == 0:
            raise DomainError(f"part {self.part_id} has empty geometry")

    def to_dict(self) -> dict:
        return {
            "part_id": int(self.part_id),
            "geometry": [g.to_dict() for g in self.geometry],
            "joint": self.joint.to_dict(),
        }


@dataclass(frozen=True)
class ArticulatedModel:
    """A static base plus movable parts, each jointed directly to the base."""

    parts: tuple  # of PartSpec
    base_part_id: int

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        ids = [p.part_id for p in self.parts]
        if len(set(ids)) != len(ids):
            raise DomainError(f"duplicate part ids: {ids}")
        statics = [p.part_id for p in self.parts if p.joint.is_static]
        if statics != [self.base_part_id]:
            raise DomainError(
                f"exactly one static part equal to the base is required, "
                f"got static={statics} base={self.base_part_id}")

    @property
    def num_parts(self) -> int:
        return len(self.parts)

    def part_index(self, part_id: int) -> int:
        for i, p in enumerate(self.parts):
            if p.part_id == part_id:
                return i
        raise DomainError(f"unknown part id {part_id}")

    def part(self, part_id: int) -> PartSpec:
        return self.parts[self.part_index(part_id)]

    def to_json(self) -> str:
        doc = {"parts": [p.to_dict() for p in self.parts],
               "base_part_id": int(self.base_part_id)}
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ArticulatedModel":
        from .primitives import primitive_from_dict
        doc = json.loads(text)
        parts = tuple(
            PartSpec(p["part_id"],
                     tuple(primitive_from_dict(g) for g in p["geometry"]),
                     JointSpec.from_dict(p["joint"]))
            for p in doc["parts"])
        return cls(parts, doc["base_part_id"])


def validate_states(model: ArticulatedModel, states: np.ndarray) -> np.ndarray:
    """Check one per-part state vector against joint limits; returns float64 copy."""
    states = np.asarray(states, dtype=np.float64).reshape(-1)
    if states.shape[0] != model.num_parts:
        raise DomainError(
            f"expected {model.num_parts} joint states, got {states.shape[0]}")
    for p, s in zip(model.parts, states):
        if s < p.joint.limit_lo - LIMIT_EPS or s > p.joint.limit_hi + LIMIT_EPS:
            raise DomainError(
                f"state {s} of part {p.part_id} outside limits "
                f"[{p.joint.limit_lo}, {p.joint.limit_hi}]")
    return states


def rotation_about_axis(axis: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis, angle in degrees."""
    a = np.asarray(axis, dtype=np.float64)
    th = np.deg2rad(angle_deg)
    c, s = np.cos(th), np.sin(th)
    K = np.array([[0.0, -a[2], a[1]],
                  [a[2], 0.0, -a[0]],
                  [-a[1], a[0], 0.0]])
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def forward_kinematics(model: ArticulatedModel, states: np.ndarray):
    """Rigid transform of every part at the given joint states.

    Returns ``(rotations, translations)`` with shapes (P, 3, 3) and (P, 3),
    ordered like ``model.parts``, mapping part-frame (= object-frame at the
    zero state) points into the object frame.
    """
    states = validate_states(model, states)
    P = model.num_parts
    R = np.empty((P, 3, 3))
    t = np.empty((P, 3))
    for i, part in enumerate(model.parts):
        j = part.joint
        if j.joint_type == JointType.REVOLUTE:
            R[i] = rotation_about_axis(j.axis, states[i])
            t[i] = j.pivot - R[i] @ j.pivot
        elif j.joint_type == JointType.PRISMATIC:
            R[i] = np.eye(3)
            t[i] = j.axis * (states[i] / 100.0)  # cm -> m
        else:
            R[i] = np.eye(3)
            t[i] = 0.0
    return R, t


def part_displacement(model: ArticulatedModel, states_t: np.ndarray,
                      states_t1: np.ndarray, point: np.ndarray,
                      part_id: int) -> np.ndarray:
    """Displacement of an object-frame point on ``part_id`` between two states."""
    idx = model.part_index(part_id)
    states_t = validate_states(model, states_t)
    states_t1 = validate_states(model, states_t1)
    p = np.asarray(point, dtype=np.float64).reshape(3)
    if states_t[idx] == states_t1[idx]:
        return np.zeros(3)
    R0, t0 = forward_kinematics(model, states_t)
    R1, t1 = forward_kinematics(model, states_t1)
    q = R0[idx].T @ (p - t0[idx])      # back to the part's zero pose
    return R1[idx] @ q + t1[idx] - p


def displace_points(model: ArticulatedModel, states_t: np.ndarray,
                    states_t1: np.ndarray, points: np.ndarray,
                    part_indices: np.ndarray) -> np.ndarray:
    """Vectorized ``part_displacement`` for points labeled by part index."""
    R0, t0 = forward_kinematics(model, states_t)
    R1, t1 = forward_kinematics(model, states_t1)
    states_t = validate_states(model, states_t)
    states_t1 = validate_states(model, states_t1)
    points = np.asarray(points, dtype=np.float64)
    out = np.zeros_like(points)
    for i in range(model.num_parts):
        if states_t[i] == states_t1[i]:
            continue  # an unmoved part displaces exactly zero
        sel = part_indices == i
        if not np.any(sel):
            continue
        q = (points[sel] - t0[i]) @ R0[i]          # R0^T applied from the right
        out[sel] = q @ R1[i].T + t1[i] - points[sel]
    return out


def sample_motion_profile(joint: JointSpec, T: int, rng: np.random.Generator) -> np.ndarray:
    """A plausible articulation profile: optional holds around a smooth monotone ramp.

    Frame 0 is the reference state; all values stay within the joint limits.
    Start/end are drawn at least a quarter of the travel range apart so every
    movable part actually moves.
    """
    if T < 2:
        raise DomainError(f"motion profile needs T >= 2, got {T}")
    if joint.is_static:
        return np.zeros(T)
    lo, hi = joint.limit_lo, joint.limit_hi
    if hi - lo <= 0.0:
        return np.full(T, lo)
    span_min = 0.25 * (hi - lo)
    start = rng.uniform(lo, hi)
    left = max(start - span_min - lo, 0.0)
    right = max(hi - (start + span_min), 0.0)
    u = rng.uniform(0.0, left + right)
    end = lo + u if u < left else (start + span_min) + (u - left)

    hold0 = int(rng.integers(0, max(T // 3, 1))) if rng.random() < 0.5 else 0
    hold1 = int(rng.integers(0, max(T // 3, 1))) if rng.random() < 0.5 else 0
    # keep at least two frames of actual ramp
    while T - hold0 - hold1 < 2:
        if hold0 >= hold1:
            hold0 -= 1
        else:
            hold1 -= 1

    prof = np.empty(T)
    t_lo, t_hi = hold0, T - 1 - hold1
    for t in range(T):
        if t <= t_lo:
            prof[t] = start
        elif t >= t_hi:
            prof[t] = end
        else:
            u = (t - t_lo) / (t_hi - t_lo)
            s = u * u * (3.0 - 2.0 * u)  # smoothstep: monotone, C1
            prof[t] = start + (end - start) * s
    return prof


def motion_profiles(model: ArticulatedModel, T: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Per-part profiles stacked to shape (T, P), part order as in the model."""
    cols = [sample_motion_profile(p.joint, T, rng) for p in model.parts]
    return np.stack(cols, axis=1)
