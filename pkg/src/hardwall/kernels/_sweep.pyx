# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled checkerboard heat-bath kernel.

Each listed site is resampled from N(neighbor mean, 1) truncated to
[wall, inf), via the complementary inverse CDF so that one uniform per
site fully determines the update. Must stay bit-identical to
``hardwall.kernels.fallback.sweep_parity``.
"""

from scipy.special.cython_special cimport ndtr, ndtri


def sweep_parity(double[::1] field, const double[::1] wall, const double[::1] u,
                 const long long[::1] idx, const long long[::1] offsets, double inv2d):
    """Update field in place at the flat indices ``idx``.

    Returns -1 on success, else the first flat index where the truncated
    tail is numerically unreachable.
    """
    cdef Py_ssize_t i, j, n = idx.shape[0], m = offsets.shape[0]
    cdef long long s
    cdef double acc, mean, p, up
    for i in range(n):
        s = idx[i]
        acc = 0.0
        for j in range(m):
            acc = acc + field[s + offsets[j]]
        mean = acc * inv2d
        p = ndtr(mean - wall[s])
        up = u[s] * p
        if up <= 0.0:
            return s
        field[s] = mean - ndtri(up)
    return -1
