"""Primitive part geometry (boxes and cylinders) and their triangle meshes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


def _ro(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Box:
    """Axis-aligned box of full size ``size``, then rotated/translated in the part frame."""

    center: np.ndarray
    size: np.ndarray  # full extents (meters)
    rotation: np.ndarray = field(default_factory=lambda: _ro(np.eye(3)))

    def __post_init__(self):
        object.__setattr__(self, "center", _ro(np.reshape(self.center, 3)))
        object.__setattr__(self, "size", _ro(np.reshape(self.size, 3)))
        object.__setattr__(self, "rotation", _ro(np.reshape(self.rotation, (3, 3))))
        if np.any(self.size <= 0):
            raise DomainError(f"box size must be positive, got {self.size}")

    def mesh(self):
        h = self.size / 2.0
        corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1)
                            for sz in (-1, 1)], dtype=np.float64) * h
        verts = corners @ self.rotation.T + self.center
        # indices into the (sx, sy, sz) corner ordering above
        quads = [
            (0, 1, 3, 2),  # -x
            (4, 6, 7, 5),  # +x
            (0, 4, 5, 1),  # -y
            (2, 3, 7, 6),  # +y
            (0, 2, 6, 4),  # -z
            (1, 5, 7, 3),  # +z
        ]
        tris = []
        for a, b, c, d in quads:
            tris.append((a, b, c))
            tris.append((a, c, d))
        return verts, np.array(tris, dtype=np.int32)

    def to_dict(self) -> dict:
        return {"kind": "box", "center": self.center.tolist(),
                "size": self.size.tolist(), "rotation": self.rotation.tolist()}


@dataclass(frozen=True)
class Cylinder:
    """Cylinder along a unit axis through ``center``; meshed as an n-gon prism."""

    center: np.ndarray
    axis: np.ndarray
    radius: float
    half_length: float
    segments: int = 16

    def __post_init__(self):
        object.__setattr__(self, "center", _ro(np.reshape(self.center, 3)))
        axis = np.reshape(np.asarray(self.axis, dtype=np.float64), 3)
        n = np.linalg.norm(axis)
        if n == 0:
            raise DomainError("cylinder axis must be nonzero")
        object.__setattr__(self, "axis", _ro(axis / n))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "half_length", float(self.half_length))
        if self.radius <= 0 or self.half_length <= 0:
            raise DomainError("cylinder radius/half_length must be positive")

    def mesh(self):
        a = self.axis
        # any vector not parallel to the axis
        ref = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        u = np.cross(a, ref)
        u /= np.linalg.norm(u)
        v = np.cross(a, u)
        n = self.segments
        ang = 2.0 * np.pi * np.arange(n) / n
        ring = self.radius * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v)
        top = ring + self.center + self.half_length * a
        bot = ring + self.center - self.half_length * a
        ctop = self.center + self.half_length * a
        cbot = self.center - self.half_length * a
        verts = np.vstack([top, bot, ctop[None], cbot[None]])
        itop, ibot, ictop, icbot = np.arange(n), np.arange(n) + n, 2 * n, 2 * n + 1
        tris = []
        for i in range(n):
            j = (i + 1) % n
            tris.append((itop[i], ibot[i], ibot[j]))   # side
            tris.append((itop[i], ibot[j], itop[j]))
            tris.append((ictop, itop[i], itop[j]))     # caps
            tris.append((icbot, ibot[j], ibot[i]))
        return verts, np.array(tris, dtype=np.int32)

    def to_dict(self) -> dict:
        return {"kind": "cylinder", "center": self.center.tolist(),
                "axis": self.axis.tolist(), "radius": self.radius,
                "half_length": self.half_length, "segments": self.segments}


def primitive_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "box":
        return Box(d["center"], d["size"], d["rotation"])
    if kind == "cylinder":
        return Cylinder(d["center"], d["axis"], d["radius"], d["half_length"],
                        d.get("segments", 16))
    raise DomainError(f"unknown primitive kind {kind!r}")


def mesh_parts(parts, rotations, translations):
    """Mesh every part posed by per-part rigid transforms.

    Returns (verts (V, 3), tris (F, 3), tri_part_index (F,)) with triangle
    ownership given by part *index* in the input order.
    """
    all_v, all_t, all_p = [], [], []
    base = 0
    for i, part in enumerate(parts):
        for prim in part.geometry:
            v, t = prim.mesh()
            all_v.append(v @ rotations[i].T + translations[i])
            all_t.append(t + base)
            all_p.append(np.full(t.shape[0], i, dtype=np.int32))
            base += v.shape[0]
    return (np.vstack(all_v), np.vstack(all_t).astype(np.int32),
            np.concatenate(all_p))
