# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, ceil, floor, fmin, fmax

cnp.import_array()

NAME = "cython"


cdef inline void _ace_span(double* acc, const double* vals, Py_ssize_t c0, Py_ssize_t c1,
                           double slope, double svk, const double* dcol) noexcept nogil:
    # dcol[c] == sqrt(dx*dx + dy*dy) for this sample, bit for bit
    cdef Py_ssize_t c
    cdef double t
    for c in range(c0, c1):
        t = slope * (vals[c] - svk) / 255.0
        t = fmin(fmax(t, -1.0), 1.0)
        acc[c] += t / dcol[c]


def ace_response(channel, sample, double slope):
    """Per pixel, contributions are summed in ``sample`` order (sample-major loop)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] img = np.ascontiguousarray(channel, dtype=np.float64)
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    sample = np.ascontiguousarray(sample, dtype=np.int64)
    cdef double[::1] sv = img.ravel()[sample]
    cdef cnp.int64_t[::1] srow = sample // w
    cdef cnp.int64_t[::1] scol = sample % w
    # dist[|dy|, dx + w - 1] for signed column offsets dx in [-(w-1), w-1]
    oy = np.arange(h, dtype=np.float64)[:, None]
    ox = np.arange(-(w - 1), w, dtype=np.float64)[None, :]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dist = np.ascontiguousarray(np.sqrt(ox * ox + oy * oy))
    cdef const double* dtab = <const double*>dist.data
    cdef Py_ssize_t pitch = 2 * w - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double* acc = <double*>out_arr.data
    cdef const double* vals = <const double*>img.data
    cdef Py_ssize_t ns = sample.shape[0], k, r, sc, ady
    cdef const double* dcol
    with nogil:
        for r in range(h):
            for k in range(ns):
                ady = r - srow[k] if r >= srow[k] else srow[k] - r
                sc = scol[k]
                dcol = dtab + ady * pitch + (w - 1) - sc
                if ady == 0:
                    _ace_span(acc + r * w, vals + r * w, 0, sc, slope, sv[k], dcol)
                    _ace_span(acc + r * w, vals + r * w, sc + 1, w, slope, sv[k], dcol)
                else:
                    _ace_span(acc + r * w, vals + r * w, 0, w, slope, sv[k], dcol)
    return out_arr


def rasterize(sx_in, sy_in, sz_in, colors_in, faces_in, int width, int height):
    cdef double[::1] sx = np.ascontiguousarray(sx_in, dtype=np.float64)
    cdef double[::1] sy = np.ascontiguousarray(sy_in, dtype=np.float64)
    cdef double[::1] sz = np.ascontiguousarray(sz_in, dtype=np.float64)
    cdef double[:, ::1] col = np.ascontiguousarray(colors_in, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] faces = np.ascontiguousarray(faces_in, dtype=np.int64)
    depth_arr = np.full((height, width), -np.inf)
    rgb_arr = np.zeros((height, width, 3))
    cov_arr = np.zeros((height, width), dtype=np.uint8)
    cdef double[:, ::1] depth = depth_arr
    cdef double[:, :, ::1] rgb = rgb_arr
    cdef cnp.uint8_t[:, ::1] covered = cov_arr
    cdef Py_ssize_t f, nf = faces.shape[0], i, j
    cdef cnp.int64_t a, b, c
    cdef int ch, i_lo, i_hi, j_lo, j_hi
    cdef double x0, y0, z0, x1, y1, z1, x2, y2, z2, area, px, py
    cdef double e0, e1, e2, b0, b1, b2, z
    with nogil:
        for f in range(nf):
            a = faces[f, 0]
            b = faces[f, 1]
            c = faces[f, 2]
            x0 = sx[a]; y0 = sy[a]; z0 = sz[a]
            x1 = sx[b]; y1 = sy[b]; z1 = sz[b]
            x2 = sx[c]; y2 = sy[c]; z2 = sz[c]
            area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            if area == 0.0:
                continue
            i_lo = <int>ceil(min(x0, min(x1, x2)) - 0.5)
            i_hi = <int>floor(max(x0, max(x1, x2)) - 0.5)
            j_lo = <int>ceil(min(y0, min(y1, y2)) - 0.5)
            j_hi = <int>floor(max(y0, max(y1, y2)) - 0.5)
            if i_lo < 0:
                i_lo = 0
            if j_lo < 0:
                j_lo = 0
            if i_hi > width - 1:
                i_hi = width - 1
            if j_hi > height - 1:
                j_hi = height - 1
            for j in range(j_lo, j_hi + 1):
                py = j + 0.5
                for i in range(i_lo, i_hi + 1):
                    px = i + 0.5
                    e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
                    e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
                    e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
                    if area > 0.0:
                        if e0 < 0.0 or e1 < 0.0 or e2 < 0.0:
                            continue
                    else:
                        if e0 > 0.0 or e1 > 0.0 or e2 > 0.0:
                            continue
                    b0 = e0 / area
                    b1 = e1 / area
                    b2 = e2 / area
                    z = b0 * z0 + b1 * z1 + b2 * z2
                    if z > depth[j, i]:
                        depth[j, i] = z
                        covered[j, i] = 1
                        for ch in range(3):
                            rgb[j, i, ch] = b0 * col[a, ch] + b1 * col[b, ch] + b2 * col[c, ch]
    return depth_arr, rgb_arr, cov_arr


def alpha_over(cnp.uint8_t[:, :, :] dst, const cnp.uint8_t[:, :, :] src, int x0, int y0):
    cdef int H = dst.shape[0], W = dst.shape[1]
    cdef int h = src.shape[0], w = src.shape[1]
    cdef int xa = max(x0, 0), ya = max(y0, 0)
    cdef int xb = min(x0 + w, W), yb = min(y0 + h, H)
    cdef int x, y, ch, al
    if xa >= xb or ya >= yb:
        return dst
    with nogil:
        for y in range(ya, yb):
            for x in range(xa, xb):
                al = src[y - y0, x - x0, 3]
                if al == 0:
                    continue
                for ch in range(3):
                    dst[y, x, ch] = <cnp.uint8_t>(
                        (src[y - y0, x - x0, ch] * al + dst[y, x, ch] * (255 - al) + 127) // 255)
    return dst
