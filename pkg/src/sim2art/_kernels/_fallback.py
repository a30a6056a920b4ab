"""Pure-numpy implementations of the hot kernels.

These mirror the Cython versions in ``_compiled.pyx`` operation for
operation; the equivalence tests assert bit-identical outputs, so any change
here must be replicated there (and vice versa).
"""

import numpy as np

BACKEND = "fallback"


def fps(points: np.ndarray, n_samples: int, seed_index: int) -> np.ndarray:
    """Greedy farthest point sampling; ties resolved to the lowest index."""
    n = points.shape[0]
    idx = np.empty(n_samples, dtype=np.int64)
    idx[0] = seed_index
    d2 = np.sum((points - points[seed_index]) ** 2, axis=1)
    for j in range(1, n_samples):
        nxt = int(np.argmax(d2))  # argmax returns the first maximum
        idx[j] = nxt
        nd2 = np.sum((points - points[nxt]) ** 2, axis=1)
        np.minimum(d2, nd2, out=d2)
    return idx


def st_neighbors(points: np.ndarray, query_t: np.ndarray, query_xyz: np.ndarray,
                 r_s: float, r_t: int, k_max: int):
    """Spatio-temporal ball query with a nearest-first cap.

    ``points`` is (T, N, 3); queries are given by their frame index and
    position.  Candidates are scanned frame-ascending then index-ascending;
    among equal distances that scan order breaks ties.  Returns frame/index
    arrays of shape (Q, k_max) padded with -1, plus per-query counts.
    """
    T, N, _ = points.shape
    Q = query_xyz.shape[0]
    r2 = r_s * r_s
    nbr_t = np.full((Q, k_max), -1, dtype=np.int32)
    nbr_i = np.full((Q, k_max), -1, dtype=np.int32)
    counts = np.zeros(Q, dtype=np.int32)
    for q in range(Q):
        t = int(query_t[q])
        t0, t1 = max(0, t - r_t), min(T - 1, t + r_t)
        cand_d2 = []
        cand_t = []
        cand_i = []
        for tp in range(t0, t1 + 1):
            d2 = np.sum((points[tp] - query_xyz[q]) ** 2, axis=1)
            keep = np.flatnonzero(d2 <= r2)
            cand_d2.append(d2[keep])
            cand_t.append(np.full(keep.shape[0], tp, dtype=np.int32))
            cand_i.append(keep.astype(np.int32))
        d2 = np.concatenate(cand_d2)
        order = np.argsort(d2, kind="stable")[:k_max]
        k = order.shape[0]
        counts[q] = k
        nbr_t[q, :k] = np.concatenate(cand_t)[order]
        nbr_i[q, :k] = np.concatenate(cand_i)[order]
    return nbr_t, nbr_i, counts


def rasterize(verts: np.ndarray, tris: np.ndarray, tri_part: np.ndarray,
              fx: float, fy: float, cx: float, cy: float,
              width: int, height: int, znear: float):
    """Z-buffer rasterization of camera-frame triangles.

    Perspective-correct depth (linear in 1/z); triangles with any vertex in
    front of ``znear`` are dropped (cameras in this package keep a safe
    distance).  Returns (depth, part_id) buffers; empty pixels hold inf / -1.
    """
    depth = np.full((height, width), np.inf)
    pid = np.full((height, width), -1, dtype=np.int32)
    for f in range(tris.shape[0]):
        v0, v1, v2 = verts[tris[f, 0]], verts[tris[f, 1]], verts[tris[f, 2]]
        z0, z1, z2 = v0[2], v1[2], v2[2]
        if z0 < znear or z1 < znear or z2 < znear:
            continue
        x0 = fx * v0[0] / z0 + cx
        y0 = fy * v0[1] / z0 + cy
        x1 = fx * v1[0] / z1 + cx
        y1 = fy * v1[1] / z1 + cy
        x2 = fx * v2[0] / z2 + cx
        y2 = fy * v2[1] / z2 + cy
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        ix0 = max(0, int(np.ceil(min(x0, x1, x2) - 0.5)))
        ix1 = min(width - 1, int(np.floor(max(x0, x1, x2) - 0.5)))
        iy0 = max(0, int(np.ceil(min(y0, y1, y2) - 0.5)))
        iy1 = min(height - 1, int(np.floor(max(y0, y1, y2) - 0.5)))
        if ix0 > ix1 or iy0 > iy1:
            continue
        px = np.arange(ix0, ix1 + 1) + 0.5
        py = (np.arange(iy0, iy1 + 1) + 0.5)[:, None]
        w0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        w1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
        w2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
        inside = ((w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)) | \
                 ((w0 <= 0.0) & (w1 <= 0.0) & (w2 <= 0.0))
        if not inside.any():
            continue
        invz = (w0 / area) / z0 + (w1 / area) / z1 + (w2 / area) / z2
        with np.errstate(divide="ignore"):
            z = 1.0 / invz
        patch = depth[iy0:iy1 + 1, ix0:ix1 + 1]
        upd = inside & (z < patch)
        patch[upd] = z[upd]
        pid[iy0:iy1 + 1, ix0:ix1 + 1][upd] = tri_part[f]
    return depth, pid
