"""Pure-numpy implementations of the path kernels.

Used when the compiled extension is unavailable, and as the reference the
compiled kernels are tested against.
"""
import numpy as np


def crossing_counts(values, level):
    x = np.asarray(values, dtype=np.float64) - level
    if x.shape[1] < 2:
        return np.zeros(x.shape[0], dtype=np.int64)
    return np.count_nonzero(x[:, :-1] * x[:, 1:] < 0.0, axis=1).astype(np.int64)


def hedge_sums(prices, stride, locs, cum, base):
    prices = np.asarray(prices, dtype=np.float64)
    if stride < 1 or (prices.shape[1] - 1) % stride != 0:
        raise ValueError("stride must divide the number of steps")
    s = prices[:, ::stride]
    cum = np.asarray(cum)
    below = np.searchsorted(locs, s, side="left")
    deriv = base + cum[below]
    gains = np.sum(deriv[:, :-1] * np.diff(s, axis=1), axis=1)
    turns = np.sum(s[:, :-1] * np.abs(np.diff(deriv, axis=1)), axis=1)
    overs = np.zeros(s.shape[0])
    for j, a in enumerate(locs):
        crossed = (below[:, :-1] > j) != (below[:, 1:] > j)
        overs += (cum[j + 1] - cum[j]) * np.sum(np.where(crossed, np.abs(s[:, 1:] - a), 0.0), axis=1)
    return gains, turns, overs


def occupation_steps(values, lo, hi):
    x = np.asarray(values, dtype=np.float64)
    x0, x1 = x[:, :-1], x[:, 1:]
    a = np.minimum(x0, x1)
    b = np.maximum(x0, x1)
    width = b - a
    overlap = np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)
    flat = width == 0.0
    frac = np.where(flat, ((x0 > lo) & (x0 < hi)).astype(np.float64),
                    overlap / np.where(flat, 1.0, width))
    return frac.sum(axis=1)
