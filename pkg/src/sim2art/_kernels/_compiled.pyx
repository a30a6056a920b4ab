# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Cython fast path for the hot kernels.

Must stay arithmetically identical to ``_fallback.py`` (same operations in
the same order; the build disables FP contraction) so that both backends
return bit-identical results.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor

cnp.import_array()

BACKEND = "compiled"


def fps(cnp.float64_t[:, ::1] points, int n_samples, int seed_index):
    cdef int n = points.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx = np.empty(n_samples, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d2_arr = np.empty(n, dtype=np.float64)
    cdef cnp.float64_t[::1] d2 = d2_arr
    cdef int i, j, nxt
    cdef double dx, dy, dz, v, best
    cdef double px, py, pz

    px = points[seed_index, 0]
    py = points[seed_index, 1]
    pz = points[seed_index, 2]
    for i in range(n):
        dx = points[i, 0] - px
        dy = points[i, 1] - py
        dz = points[i, 2] - pz
        d2[i] = dx * dx + dy * dy + dz * dz
    idx[0] = seed_index
    for j in range(1, n_samples):
        nxt = 0
        best = d2[0]
        for i in range(1, n):
            if d2[i] > best:  # strict: first maximum wins ties
                best = d2[i]
                nxt = i
        idx[j] = nxt
        px = points[nxt, 0]
        py = points[nxt, 1]
        pz = points[nxt, 2]
        for i in range(n):
            dx = points[i, 0] - px
            dy = points[i, 1] - py
            dz = points[i, 2] - pz
            v = dx * dx + dy * dy + dz * dz
            if v < d2[i]:
                d2[i] = v
    return idx


def st_neighbors(cnp.float64_t[:, :, ::1] points, cnp.int32_t[::1] query_t,
                 cnp.float64_t[:, ::1] query_xyz, double r_s, int r_t, int k_max):
    cdef int T = points.shape[0]
    cdef int N = points.shape[1]
    cdef int Q = query_xyz.shape[0]
    cdef double r2 = r_s * r_s
    cdef cnp.ndarray[cnp.int32_t, ndim=2] nbr_t = np.full((Q, k_max), -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] nbr_i = np.full((Q, k_max), -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] counts = np.zeros(Q, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] best_arr = np.empty(k_max, dtype=np.float64)
    cdef cnp.float64_t[::1] best = best_arr
    cdef cnp.int32_t[:, ::1] bt = nbr_t
    cdef cnp.int32_t[:, ::1] bi = nbr_i
    cdef int q, t, t0, t1, tp, i, k, pos, m
    cdef double qx, qy, qz, dx, dy, dz, d2

    for q in range(Q):
        t = query_t[q]
        t0 = t - r_t if t - r_t > 0 else 0
        t1 = t + r_t if t + r_t < T - 1 else T - 1
        qx = query_xyz[q, 0]
        qy = query_xyz[q, 1]
        qz = query_xyz[q, 2]
        k = 0
        for tp in range(t0, t1 + 1):
            for i in range(N):
                dx = points[tp, i, 0] - qx
                dy = points[tp, i, 1] - qy
                dz = points[tp, i, 2] - qz
                d2 = dx * dx + dy * dy + dz * dz
                if d2 > r2:
                    continue
                if k == k_max and d2 >= best[k_max - 1]:
                    continue  # not better than the current worst (ties keep the incumbent)
                # insert after any equal-distance incumbents (stable order)
                pos = k if k < k_max else k_max - 1
                while pos > 0 and best[pos - 1] > d2:
                    best[pos] = best[pos - 1]
                    bt[q, pos] = bt[q, pos - 1]
                    bi[q, pos] = bi[q, pos - 1]
                    pos -= 1
                best[pos] = d2
                bt[q, pos] = tp
                bi[q, pos] = i
                if k < k_max:
                    k += 1
        counts[q] = k
        for m in range(k, k_max):
            bt[q, m] = -1
            bi[q, m] = -1
    return nbr_t, nbr_i, counts


def rasterize(cnp.float64_t[:, ::1] verts, cnp.int32_t[:, ::1] tris,
              cnp.int32_t[::1] tri_part, double fx, double fy,
              double cx, double cy, int width, int height, double znear):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] depth_arr = np.full((height, width), np.inf)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] pid_arr = np.full((height, width), -1, dtype=np.int32)
    cdef cnp.float64_t[:, ::1] depth = depth_arr
    cdef cnp.int32_t[:, ::1] pid = pid_arr
    cdef int f, F = tris.shape[0]
    cdef int i0, i1, i2, ix, iy, ix0, ix1, iy0, iy1
    cdef double z0, z1, z2, x0, y0, x1, y1, x2, y2
    cdef double area, mn, mx, px, py, w0, w1, w2, invz, z
    cdef bint inside

    for f in range(F):
        i0 = tris[f, 0]
        i1 = tris[f, 1]
        i2 = tris[f, 2]
        z0 = verts[i0, 2]
        z1 = verts[i1, 2]
        z2 = verts[i2, 2]
        if z0 < znear or z1 < znear or z2 < znear:
            continue
        x0 = fx * verts[i0, 0] / z0 + cx
        y0 = fy * verts[i0, 1] / z0 + cy
        x1 = fx * verts[i1, 0] / z1 + cx
        y1 = fy * verts[i1, 1] / z1 + cy
        x2 = fx * verts[i2, 0] / z2 + cx
        y2 = fy * verts[i2, 1] / z2 + cy
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        mn = x0
        if x1 < mn: mn = x1
        if x2 < mn: mn = x2
        mx = x0
        if x1 > mx: mx = x1
        if x2 > mx: mx = x2
        # clamp in double space before casting (huge off-screen values)
        mn = ceil(mn - 0.5)
        mx = floor(mx - 0.5)
        if mn < 0.0: mn = 0.0
        if mx > width - 1: mx = width - 1
        if mn > mx:
            continue
        ix0 = <int>mn
        ix1 = <int>mx
        mn = y0
        if y1 < mn: mn = y1
        if y2 < mn: mn = y2
        mx = y0
        if y1 > mx: mx = y1
        if y2 > mx: mx = y2
        mn = ceil(mn - 0.5)
        mx = floor(mx - 0.5)
        if mn < 0.0: mn = 0.0
        if mx > height - 1: mx = height - 1
        if mn > mx:
            continue
        iy0 = <int>mn
        iy1 = <int>mx
        for iy in range(iy0, iy1 + 1):
            py = iy + 0.5
            for ix in range(ix0, ix1 + 1):
                px = ix + 0.5
                w0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
                w1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
                w2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
                inside = (w0 >= 0.0 and w1 >= 0.0 and w2 >= 0.0) or \
                         (w0 <= 0.0 and w1 <= 0.0 and w2 <= 0.0)
                if not inside:
                    continue
                invz = w0 / area / z0 + w1 / area / z1 + w2 / area / z2
                z = 1.0 / invz
                if z < depth[iy, ix]:
                    depth[iy, ix] = z
                    pid[iy, ix] = tri_part[f]
    return depth_arr, pid_arr
