"""Vectorized numpy implementation of the trial kernels.

Used when the compiled extension is unavailable or ``BELLSIM_PURE_PYTHON``
is set. Output is bit-identical to ``_kernels.pyx``.
"""
import numpy as np

from .rng import DRAWS_PER_TRIAL, GOLDEN

_GOLDEN = np.uint64(GOLDEN)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _unit(x):
    return (x >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def uniforms(key, start, n, stride=1):
    """Uniforms at counters ``start, start + stride, ...`` of stream ``key``."""
    counters = np.uint64(start) + np.arange(n, dtype=np.uint64) * np.uint64(stride)
    return _unit(_mix64(np.uint64(key) + (counters + np.uint64(1)) * _GOLDEN))


def _bisect_right(cdf, u):
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1)


def sample_trials(key, start, n, branch_cdf, internal_cdf, offsets):
    """Draw branch and internal-state indices for trials ``start .. start+n-1``.

    ``internal_cdf`` holds the four detectors' cumulative weights back to back;
    detector ``d`` owns ``internal_cdf[offsets[d]:offsets[d + 1]]``.
    """
    first = start * DRAWS_PER_TRIAL
    branch_cdf = np.asarray(branch_cdf, dtype=np.float64)
    internal_cdf = np.asarray(internal_cdf, dtype=np.float64)
    branch = _bisect_right(branch_cdf, uniforms(key, first, n, DRAWS_PER_TRIAL))
    internal = np.empty((n, 4), dtype=np.int64)
    for d in range(4):
        cdf = internal_cdf[offsets[d]:offsets[d + 1]]
        u = uniforms(key, first + 1 + d, n, DRAWS_PER_TRIAL)
        internal[:, d] = _bisect_right(cdf, u)
    return branch.astype(np.int64), internal
