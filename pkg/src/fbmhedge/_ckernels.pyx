# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops over batches of sampled paths.

Every routine takes a 2-D array with one path per row and returns one value
per row. The pure-numpy twins live in ``_pykernels``; both must agree.
"""
import numpy as np


def crossing_counts(const double[:, :] values, double level):
    cdef Py_ssize_t rows = values.shape[0], cols = values.shape[1]
    cdef Py_ssize_t r, i
    cdef long long c
    cdef double prev, cur
    out = np.zeros(rows, dtype=np.int64)
    cdef long long[::1] o = out
    for r in range(rows):
        c = 0
        if cols > 0:
            prev = values[r, 0] - level
            for i in range(1, cols):
                cur = values[r, i] - level
                if prev * cur < 0.0:
                    c += 1
                prev = cur
        o[r] = c
    return out


cdef inline Py_ssize_t _atoms_below(double x, const double[::1] locs) nogil:
    cdef Py_ssize_t lo = 0, hi = locs.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if locs[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def hedge_sums(const double[:, :] prices, Py_ssize_t stride,
               const double[::1] locs, const double[::1] cum, double base):
    cdef Py_ssize_t rows = prices.shape[0], cols = prices.shape[1]
    cdef Py_ssize_t r, i, j, k_prev, k_cur, k_lo, k_hi
    cdef double gain, turn, over, s_prev, s_cur, d_prev, d_cur
    if stride < 1 or (cols - 1) % stride != 0:
        raise ValueError("stride must divide the number of steps")
    gains = np.zeros(rows, dtype=np.float64)
    turns = np.zeros(rows, dtype=np.float64)
    overs = np.zeros(rows, dtype=np.float64)
    cdef double[::1] g = gains
    cdef double[::1] t = turns
    cdef double[::1] o = overs
    with nogil:
        for r in range(rows):
            gain = 0.0
            turn = 0.0
            over = 0.0
            s_prev = prices[r, 0]
            k_prev = _atoms_below(s_prev, locs)
            d_prev = base + cum[k_prev]
            i = stride
            while i < cols:
                s_cur = prices[r, i]
                k_cur = _atoms_below(s_cur, locs)
                d_cur = base + cum[k_cur]
                gain += d_prev * (s_cur - s_prev)
                if k_cur != k_prev:
                    turn += s_prev * abs(d_cur - d_prev)
                    k_lo = k_prev if k_prev < k_cur else k_cur
                    k_hi = k_cur if k_prev < k_cur else k_prev
                    for j in range(k_lo, k_hi):
                        over += (cum[j + 1] - cum[j]) * abs(s_cur - locs[j])
                s_prev = s_cur
                d_prev = d_cur
                k_prev = k_cur
                i += stride
            g[r] = gain
            t[r] = turn
            o[r] = over
    return gains, turns, overs


def occupation_steps(const double[:, :] values, double lo, double hi):
    cdef Py_ssize_t rows = values.shape[0], cols = values.shape[1]
    cdef Py_ssize_t r, i
    cdef double acc, x0, x1, a, b, top, bottom
    out = np.zeros(rows, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for r in range(rows):
            acc = 0.0
            for i in range(cols - 1):
                x0 = values[r, i]
                x1 = values[r, i + 1]
                if x0 == x1:
                    if lo < x0 < hi:
                        acc += 1.0
                    continue
                if x0 < x1:
                    a = x0
                    b = x1
                else:
                    a = x1
                    b = x0
                top = b if b < hi else hi
                bottom = a if a > lo else lo
                if top > bottom:
                    acc += (top - bottom) / (b - a)
            o[r] = acc
    return out
