"""Synthetic articulated-object videos with exact ground truth.

Procedural stand-ins for common articulated categories are built from box and
cylinder primitives, articulated with random motion profiles, and observed by
a camera arc on the upper hemisphere.  Points are sampled from a z-buffer (so
only visible surfaces appear), scene flow comes straight from the kinematics,
and a part-discriminative random feature field stands in for image semantics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GenerationError
from .kinematics import (ArticulatedModel, JointSpec, JointType, PartSpec,
                         displace_points, forward_kinematics, motion_profiles)
from .primitives import Box, Cylinder, mesh_parts
from .render import (CameraParams, CameraPose, render_sample_points,
                     sample_camera_trajectory)
from .sequence import GroundTruthAnnotation, PointCloudSequence

CATEGORIES = ("cabinet_doors", "drawer_unit", "box", "laptop", "eyeglasses",
              "stapler", "mixed")

X, Y, Z = np.eye(3)


def _revolute(axis, pivot, lo, hi) -> JointSpec:
    return JointSpec(JointType.REVOLUTE, axis, pivot, lo, hi)


def _prismatic(axis, lo, hi) -> JointSpec:
    return JointSpec(JointType.PRISMATIC, axis, (0.0, 0.0, 0.0), lo, hi)


def _build_laptop(rng):
    w = rng.uniform(0.26, 0.40)
    d = rng.uniform(0.20, 0.30)
    hb = rng.uniform(0.012, 0.022)
    hs = rng.uniform(0.18, 0.28)
    ts = 0.008
    base = PartSpec(0, (Box((0, 0, hb / 2), (w, d, hb)),), JointSpec.static())
    screen = PartSpec(
        1, (Box((0, -d / 2 + ts / 2, hb + hs / 2), (w, ts, hs)),),
        _revolute(X, (0, -d / 2 + ts / 2, hb), -85.0, 30.0))
    return ArticulatedModel((base, screen), 0)


def _build_box(rng):
    w = rng.uniform(0.15, 0.35)
    d = rng.uniform(0.15, 0.35)
    h = rng.uniform(0.08, 0.22)
    tl = 0.01
    body = PartSpec(0, (Box((0, 0, h / 2), (w, d, h)),), JointSpec.static())
    lid = PartSpec(1, (Box((0, 0, h + tl / 2), (w, d, tl)),),
                   _revolute(X, (0, -d / 2, h), 0.0, 110.0))
    return ArticulatedModel((body, lid), 0)


def _build_stapler(rng):
    L = rng.uniform(0.15, 0.22)
    w = rng.uniform(0.035, 0.05)
    hb = rng.uniform(0.018, 0.028)
    ht = rng.uniform(0.015, 0.025)
    base = PartSpec(0, (Box((0, 0, hb / 2), (w, L, hb)),), JointSpec.static())
    arm = PartSpec(1, (Box((0, 0, hb + ht / 2), (w * 0.95, L * 0.98, ht)),),
                   _revolute(X, (0, -L / 2 + 0.01, hb), 0.0, 50.0))
    return ArticulatedModel((base, arm), 0)


def _build_eyeglasses(rng):
    w = rng.uniform(0.12, 0.15)
    h = rng.uniform(0.035, 0.05)
    L = rng.uniform(0.11, 0.14)
    rt = 0.003
    front = PartSpec(0, (Box((0, 0, 0), (w, 0.005, h)),), JointSpec.static())
    hinge_x = w / 2 - rt
    left = PartSpec(
        1, (Cylinder((-hinge_x, -L / 2, 0), Y, rt, L / 2),),
        _revolute(Z, (-hinge_x, 0, 0), 0.0, 90.0))
    right = PartSpec(
        2, (Cylinder((hinge_x, -L / 2, 0), Y, rt, L / 2),),
        _revolute(Z, (hinge_x, 0, 0), -90.0, 0.0))
    return ArticulatedModel((front, left, right), 0)


def _front_bands(rng, w, n, margin=0.01):
    """Split the body front into n vertical bands: (x_left, x_right) pairs."""
    edges = np.linspace(-w / 2, w / 2, n + 1)
    return [(edges[i] + margin, edges[i + 1] - margin) for i in range(n)]


def _door_part(part_id, x0, x1, d, h, hinge_left, td=0.02, mg=0.02):
    cx = (x0 + x1) / 2
    geo = Box((cx, d / 2 + td / 2, h / 2), (x1 - x0, td, h - 2 * mg))
    hinge_x = x0 if hinge_left else x1
    lo, hi = (0.0, 100.0) if hinge_left else (-100.0, 0.0)
    return PartSpec(part_id, (geo,),
                    _revolute(Z, (hinge_x, d / 2 + td / 2, h / 2), lo, hi))


def _drawer_part(part_id, rng, w, d, z0, z1, tf=0.02, mg=0.01):
    band = z1 - z0
    cz = (z0 + z1) / 2
    travel = min(25.0, 60.0 * d)  # cm; never pull past ~60% of the body depth
    front = Box((0, d / 2 + tf / 2, cz), (w - 2 * mg, tf, band - 2 * mg))
    tray = Box((0, d / 2 - 0.35 * d, cz - band * 0.1),
               (w - 4 * mg, 0.7 * d, band * 0.55))
    knob = Cylinder((0, d / 2 + tf + 0.012, cz), Y, 0.008, 0.012)
    return PartSpec(part_id, (front, tray, knob), _prismatic(Y, 0.0, travel))


def _build_cabinet_doors(rng):
    w = rng.uniform(0.5, 1.0)
    d = rng.uniform(0.3, 0.45)
    h = rng.uniform(0.7, 1.4)
    n = int(rng.integers(1, 4))
    body = PartSpec(0, (Box((0, 0, h / 2), (w, d, h)),), JointSpec.static())
    parts = [body]
    for i, (x0, x1) in enumerate(_front_bands(rng, w, n)):
        hinge_left = bool(rng.random() < 0.5)
        parts.append(_door_part(i + 1, x0, x1, d, h, hinge_left))
    return ArticulatedModel(tuple(parts), 0)


def _build_drawer_unit(rng):
    w = rng.uniform(0.4, 0.8)
    d = rng.uniform(0.35, 0.5)
    h = rng.uniform(0.6, 1.1)
    n = int(rng.integers(1, 5))
    body = PartSpec(0, (Box((0, 0, h / 2), (w, d, h)),), JointSpec.static())
    parts = [body]
    bands = np.linspace(0.02, h - 0.02, n + 1)
    for i in range(n):
        parts.append(_drawer_part(i + 1, rng, w, d, bands[i], bands[i + 1]))
    return ArticulatedModel(tuple(parts), 0)


def _build_mixed(rng):
    w = rng.uniform(0.4, 0.9)
    d = rng.uniform(0.3, 0.5)
    h = rng.uniform(0.5, 1.2)
    n = int(rng.integers(1, 5))
    body = PartSpec(0, (Box((0, 0, h / 2), (w, d, h)),), JointSpec.static())
    parts = [body]
    for i, (x0, x1) in enumerate(_front_bands(rng, w, n)):
        if rng.random() < 0.5:
            parts.append(_door_part(i + 1, x0, x1, d, h, bool(rng.random() < 0.5)))
        else:
            # narrow sliding compartment occupying this band
            cx = (x0 + x1) / 2
            bw = x1 - x0
            travel = min(25.0, 60.0 * d)
            front = Box((cx, d / 2 + 0.01, h / 2), (bw, 0.02, h * 0.9))
            tray = Box((cx, d / 2 - 0.35 * d, h / 2), (bw * 0.9, 0.7 * d, h * 0.5))
            parts.append(PartSpec(i + 1, (front, tray), _prismatic(Y, 0.0, travel)))
    return ArticulatedModel(tuple(parts), 0)


_BUILDERS = {
    "cabinet_doors": _build_cabinet_doors,
    "drawer_unit": _build_drawer_unit,
    "box": _build_box,
    "laptop": _build_laptop,
    "eyeglasses": _build_eyeglasses,
    "stapler": _build_stapler,
    "mixed": _build_mixed,
}


def build_procedural_object(category: str, rng: np.random.Generator) -> ArticulatedModel:
    """Random model of the requested category; same rng stream, same model."""
    if category not in _BUILDERS:
        raise DomainError(f"unknown category {category!r}; "
                          f"choose one of {', '.join(CATEGORIES)}")
    return _BUILDERS[category](rng)


def object_bounds(model: ArticulatedModel, states=None):
    """(centroid, radius) of the posed model's vertices; zero states by default."""
    if states is None:
        states = np.zeros(model.num_parts)
    R, t = forward_kinematics(model, states)
    verts, _, _ = mesh_parts(model.parts, R, t)
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    centroid = (lo + hi) / 2
    radius = float(np.linalg.norm(verts - centroid, axis=1).max())
    return centroid, radius


def compute_scene_flow(model: ArticulatedModel, states_t, states_t1,
                       points: np.ndarray, labels: np.ndarray,
                       first_camera: CameraPose) -> np.ndarray:
    """Exact flow for first-camera-frame points between two joint states.

    The displacement is evaluated in the object frame and rotated into the
    first camera's frame; static parts get exactly zero (camera motion induces
    no flow because everything already lives in the first camera's frame).
    """
    lut = {pid: model.part_index(pid) for pid in np.unique(labels)}
    idx = np.vectorize(lut.get)(labels)
    world = first_camera.cam_to_world(points)
    disp = displace_points(model, states_t, states_t1, world, idx)
    return disp @ first_camera.rotation  # rotate back: R^T applied per row


def surrogate_semantic_features(model: ArticulatedModel, labels: np.ndarray,
                                points: np.ndarray, rng: np.random.Generator,
                                sigma: float = 0.1) -> np.ndarray:
    """Part-discriminative 3-d feature field: per-part base vector plus a
    smooth positional modulation and Gaussian jitter, clamped to [-1, 1]."""
    base = rng.uniform(-0.8, 0.8, size=(model.num_parts, 3))
    freq = rng.uniform(0.5, 2.0, size=(3, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
    lut = {p.part_id: i for i, p in enumerate(model.parts)}
    idx = np.vectorize(lut.get)(labels)
    feat = base[idx] + 0.15 * np.sin(2.0 * np.pi * (points @ freq.T) + phase)
    if sigma > 0:
        feat = feat + rng.normal(0.0, sigma, size=feat.shape)
    return np.clip(feat, -1.0, 1.0)


def corrupt(seq: PointCloudSequence, sigma_p: float, sigma_f: float,
            rng: np.random.Generator) -> PointCloudSequence:
    """Gaussian noise on points/flow (meters); labels, features, cameras untouched."""
    if sigma_p < 0 or sigma_f < 0:
        raise DomainError(f"noise std must be >= 0, got {sigma_p}, {sigma_f}")
    points = seq.points
    flow = seq.flow
    if sigma_p > 0:
        points = points + rng.normal(0.0, sigma_p, size=points.shape)
    if sigma_f > 0:
        flow = flow + rng.normal(0.0, sigma_f, size=flow.shape)
    return PointCloudSequence(points, flow, seq.semfeat, seq.labels, seq.cameras)


@dataclass(frozen=True)
class GenerationParams:
    sigma_points: float = 0.005   # meters
    sigma_flow: float = 0.002     # meters
    semfeat_sigma: float = 0.1
    camera: CameraParams = field(default_factory=CameraParams)
    max_attempts: int = 20


@dataclass
class GeneratedSequence:
    sequence: PointCloudSequence
    annotation: GroundTruthAnnotation
    model: ArticulatedModel
    states: np.ndarray            # (T, P) absolute joint states
    category: str
    seed: int


def make_annotation(model: ArticulatedModel, states: np.ndarray,
                    labels: np.ndarray, first_camera: CameraPose) -> GroundTruthAnnotation:
    """Ground truth in the first-camera frame for the rendered labels."""
    P = model.num_parts
    T, N = labels.shape
    masks = np.zeros((P, T, N), dtype=bool)
    types = np.zeros(P, dtype=np.int64)
    axes = np.zeros((P, 3))
    pivots = np.zeros((P, 3))
    motion = np.zeros((P, T))
    R0 = first_camera.rotation
    for i, part in enumerate(model.parts):
        masks[i] = labels == part.part_id
        types[i] = int(part.joint.joint_type)
        if not part.joint.is_static:
            axes[i] = R0.T @ part.joint.axis
            pivots[i] = first_camera.world_to_cam(part.joint.pivot)
            motion[i] = states[:, i] - states[0, i]
    return GroundTruthAnnotation(masks, types, axes, pivots, motion)


def _generate_once(category, rng, T, n_points, params):
    model = build_procedural_object(category, rng)
    states = motion_profiles(model, T, rng)
    centroid, radius = object_bounds(model, states[0])
    cameras = sample_camera_trajectory(rng, T, radius, params.camera, centroid)
    cam0 = cameras[0]

    points = np.empty((T, n_points, 3))
    labels = np.empty((T, n_points), dtype=np.int64)
    for t in range(T):
        pts_cam, lab = render_sample_points(model, states[t], cameras[t],
                                            n_points, rng)
        points[t] = cam0.world_to_cam(cameras[t].cam_to_world(pts_cam))
        labels[t] = lab

    flow = np.zeros_like(points)
    for t in range(T - 1):
        flow[t] = compute_scene_flow(model, states[t], states[t + 1],
                                     points[t], labels[t], cam0)

    semfeat = surrogate_semantic_features(model, labels, points, rng,
                                          params.semfeat_sigma)
    seq = PointCloudSequence(points, flow, semfeat, labels, cameras)
    ann = make_annotation(model, states, labels, cam0)
    return seq, ann, model, states


def generate_sequence(category: str, seed: int, T: int = 12,
                      n_points: int = 2048,
                      params: GenerationParams = GenerationParams(),
                      noisy: bool = True) -> GeneratedSequence:
    """One synthetic sequence, deterministic in (category, seed, T, n_points).

    Rejected views (nothing visible) restart generation on the same rng
    stream, keeping the outcome reproducible.
    """
    if category not in CATEGORIES:
        raise DomainError(f"unknown category {category!r}; "
                          f"choose one of {', '.join(CATEGORIES)}")
    rng = np.random.default_rng(seed)
    last = None
    for _ in range(params.max_attempts):
        try:
            seq, ann, model, states = _generate_once(category, rng, T, n_points, params)
            break
        except GenerationError as exc:
            last = exc
    else:
        raise GenerationError(f"could not generate {category} seed {seed}: {last}")
    if noisy and (params.sigma_points > 0 or params.sigma_flow > 0):
        seq = corrupt(seq, params.sigma_points, params.sigma_flow, rng)
    return GeneratedSequence(seq, ann, model, states, category, seed)
