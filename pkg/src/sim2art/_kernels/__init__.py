"""Hot numeric kernels with a compiled fast path.

At import time the Cython extension is preferred; the numpy fallback is used
when the extension is unavailable or ``SIM2ART_NO_EXT`` is set.  Both
backends compute identical results (see tests/test_kernels.py), so the choice
only affects speed.
"""

import os

import numpy as np

from . import _fallback

try:
    from . import _compiled  # type: ignore[attr-defined]
except ImportError:
    _compiled = None

if _compiled is not None and not os.environ.get("SIM2ART_NO_EXT"):
    _backend = _compiled
else:
    _backend = _fallback


def active_backend() -> str:
    """Name of the backend in use: 'compiled' or 'fallback'."""
    return _backend.BACKEND


def backends() -> dict:
    """All importable backends, keyed by name (for tests and benchmarks)."""
    out = {"fallback": _fallback}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


def fps(points, n_samples: int, seed_index: int = 0) -> np.ndarray:
    """Greedy farthest point sampling over an (N, 3) cloud."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= n_samples <= n:
        raise ValueError(f"n_samples must be in [1, {n}], got {n_samples}")
    if not 0 <= seed_index < n:
        raise ValueError(f"seed_index {seed_index} out of range")
    return _backend.fps(points, int(n_samples), int(seed_index))


def st_neighbors(points, query_t, query_xyz, r_s: float, r_t: int, k_max: int):
    """Spatio-temporal ball query; see ``_fallback.st_neighbors``."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    query_t = np.ascontiguousarray(query_t, dtype=np.int32)
    query_xyz = np.ascontiguousarray(query_xyz, dtype=np.float64)
    return _backend.st_neighbors(points, query_t, query_xyz,
                                 float(r_s), int(r_t), int(k_max))


def rasterize(verts, tris, tri_part, fx, fy, cx, cy, width, height, znear=1e-3):
    """Z-buffer rasterization of camera-frame triangles."""
    verts = np.ascontiguousarray(verts, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int32)
    tri_part = np.ascontiguousarray(tri_part, dtype=np.int32)
    return _backend.rasterize(verts, tris, tri_part, float(fx), float(fy),
                              float(cx), float(cy), int(width), int(height),
                              float(znear))
