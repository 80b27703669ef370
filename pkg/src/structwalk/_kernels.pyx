# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled compute kernels: walk sampling and segment aggregation.

Semantics match _kernels_py exactly: the same counter-based random stream,
the same walk layout, the same packed pattern keys, the same accumulation
order in the aggregation kernels.  The hot loops run without the GIL so
callers can shard sources across threads.
"""

import numpy as np

from libc.stdint cimport int32_t, int64_t, uint64_t

NAME = "compiled"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z ^= z >> 30
    z *= 0xBF58476D1CE4E5B9ULL
    z ^= z >> 27
    z *= 0x94D049BB133111EBULL
    z ^= z >> 31
    return z


def sample_walks_kernel(int64_t[::1] indptr,
                        int32_t[::1] neighbors,
                        double[::1] prob,
                        int64_t[::1] alias,
                        int64_t[::1] sources,
                        int gamma,
                        int l,
                        uint64_t seed):
    """Sample gamma walks of l nodes from each source.

    Returns (walks, keys) as in the Python backend; l must be <= 16 and
    every source must have degree >= 1.
    """
    cdef Py_ssize_t n_src = sources.shape[0]
    cdef Py_ssize_t rows = n_src * gamma
    walks_arr = np.empty((rows, l), dtype=np.int32)
    keys_arr = np.zeros(rows, dtype=np.uint64)
    if rows == 0:
        return walks_arr, keys_arr
    cdef int32_t[:, ::1] walks = walks_arr
    cdef uint64_t[::1] keys = keys_arr

    cdef Py_ssize_t si, gi, row, t, j
    cdef int64_t src, cur, start, deg, idx, loc
    cdef uint64_t h, base, r, key
    cdef double coin
    cdef int64_t seen[16]
    cdef int cnt, step

    with nogil:
        for si in range(n_src):
            src = sources[si]
            h = mix64(seed + GOLDEN * (<uint64_t>src + 1ULL))
            for gi in range(gamma):
                base = mix64(h + GOLDEN * (<uint64_t>gi + 1ULL))
                row = si * gamma + gi
                cur = src
                walks[row, 0] = <int32_t>cur
                seen[0] = cur
                cnt = 1
                key = 0
                for t in range(1, l):
                    start = indptr[cur]
                    deg = indptr[cur + 1] - start
                    r = mix64(base + GOLDEN * (<uint64_t>t + 1ULL))
                    idx = <int64_t>(r & 0xFFFFFFFFULL) % deg
                    coin = <double>(r >> 32) / 4294967296.0
                    if coin < prob[start + idx]:
                        loc = idx
                    else:
                        loc = alias[start + idx]
                    cur = neighbors[start + loc]
                    walks[row, t] = <int32_t>cur
                    step = cnt + 1
                    for j in range(cnt):
                        if seen[j] == cur:
                            step = <int>(j + 1)
                            break
                    if step == cnt + 1:
                        seen[cnt] = cur
                        cnt += 1
                    key |= (<uint64_t>(step - 1)) << (4 * t)
                keys[row] = key

    return walks_arr, keys_arr


def seg_wsum(double[:, ::1] h,
             int64_t[::1] idx,
             double[::1] w,
             int64_t[::1] indptr):
    """out[t] = sum over entries e in [indptr[t], indptr[t+1]) of
    w[e] * h[idx[e]].  Entries accumulate in order within each segment."""
    cdef Py_ssize_t n_seg = indptr.shape[0] - 1
    cdef Py_ssize_t d = h.shape[1]
    out_arr = np.zeros((n_seg, d))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t t, e, j
    cdef int64_t r
    cdef double we
    with nogil:
        for t in range(n_seg):
            for e in range(indptr[t], indptr[t + 1]):
                r = idx[e]
                we = w[e]
                for j in range(d):
                    out[t, j] = out[t, j] + we * h[r, j]
    return out_arr


def seg_wsum_back(double[:, ::1] g,
                  int64_t[::1] idx,
                  double[::1] w,
                  int64_t[::1] indptr,
                  Py_ssize_t n_rows):
    """Adjoint of seg_wsum for h: grad[idx[e]] += w[e] * g[segment(e)],
    accumulating in entry order per target row."""
    cdef Py_ssize_t n_seg = indptr.shape[0] - 1
    cdef Py_ssize_t d = g.shape[1]
    grad_arr = np.zeros((n_rows, d))
    cdef double[:, ::1] grad = grad_arr
    cdef Py_ssize_t t, e, j
    cdef int64_t r
    cdef double we
    with nogil:
        for t in range(n_seg):
            for e in range(indptr[t], indptr[t + 1]):
                r = idx[e]
                we = w[e]
                for j in range(d):
                    grad[r, j] = grad[r, j] + we * g[t, j]
    return grad_arr
