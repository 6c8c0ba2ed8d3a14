"""Backend selection for the batch path kernels.

The compiled Cython module is used when it was built; otherwise the numpy
implementation is loaded. Setting ``FBMHEDGE_PURE_PYTHON=1`` forces the
fallback. All functions take one path per row of a 2-D float array.

crossing_counts(values, level) -> int64[rows]
    Number of segments whose endpoints lie strictly on opposite sides of
    ``level``.
hedge_sums(prices, stride, locs, cum, base) -> (gain, turnover, overshoot)
    Trading gain and unscaled turnover of the left-derivative hedge on the
    subgrid ``prices[:, ::stride]``. ``cum[j]`` is the total mass of the
    first ``j`` atoms, so the hedge ratio at ``x`` is
    ``base + cum[#{locs < x}]``. ``overshoot`` sums ``mass_j * |S_i - a_j|``
    over every step ending at ``S_i`` that moves across atom ``a_j``; it
    equals ``f(S_end) - f(S_0) - gain`` in exact arithmetic.
occupation_steps(values, lo, hi) -> float[rows]
    Time (in units of the mesh) the polygonal path spends in ``(lo, hi)``.
"""
import os

if os.environ.get("FBMHEDGE_PURE_PYTHON"):
    from fbmhedge._pykernels import crossing_counts, hedge_sums, occupation_steps

    BACKEND = "python"
else:
    try:
        from fbmhedge._ckernels import crossing_counts, hedge_sums, occupation_steps

        BACKEND = "cython"
    except ImportError:
        from fbmhedge._pykernels import crossing_counts, hedge_sums, occupation_steps

        BACKEND = "python"

__all__ = ["BACKEND", "crossing_counts", "hedge_sums", "occupation_steps"]
