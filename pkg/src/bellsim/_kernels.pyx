# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled trial kernels. Must stay bit-identical to ``_kernels_py``."""
import numpy as np
from libc.stdint cimport int64_t, uint64_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t DRAWS_PER_TRIAL = 5  # keep in sync with rng.DRAWS_PER_TRIAL


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double unit_at(uint64_t key, uint64_t counter) noexcept nogil:
    return <double>(mix64(key + (counter + 1) * GOLDEN) >> 11) * (1.0 / 9007199254740992.0)


cdef inline Py_ssize_t bisect_right(const double[::1] cdf, Py_ssize_t lo,
                                    Py_ssize_t hi, double u) noexcept nogil:
    # first index i in [lo, hi) with cdf[i] > u, clamped to hi - 1
    cdef Py_ssize_t a = lo, b = hi, mid
    while a < b:
        mid = (a + b) >> 1
        if u < cdf[mid]:
            b = mid
        else:
            a = mid + 1
    if a >= hi:
        a = hi - 1
    return a - lo


def uniforms(uint64_t key, uint64_t start, Py_ssize_t n, uint64_t stride=1):
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            o[i] = unit_at(key, start + <uint64_t>i * stride)
    return out


def sample_trials(uint64_t key, int64_t start, Py_ssize_t n, branch_cdf,
                  internal_cdf, offsets):
    cdef const double[::1] bcdf = np.ascontiguousarray(branch_cdf, dtype=np.float64)
    cdef const double[::1] icdf = np.ascontiguousarray(internal_cdf, dtype=np.float64)
    cdef const int64_t[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    branch = np.empty(n, dtype=np.int64)
    internal = np.empty((n, 4), dtype=np.int64)
    cdef int64_t[::1] br = branch
    cdef int64_t[:, ::1] it = internal
    cdef Py_ssize_t k = bcdf.shape[0], i, d
    cdef uint64_t c
    with nogil:
        for i in range(n):
            c = <uint64_t>(start + i) * DRAWS_PER_TRIAL
            br[i] = bisect_right(bcdf, 0, k, unit_at(key, c))
            for d in range(4):
                it[i, d] = bisect_right(icdf, off[d], off[d + 1],
                                        unit_at(key, c + 1 + d))
    return branch, internal
