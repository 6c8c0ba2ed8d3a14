"""Local time of fractional Brownian motion.

The estimator counts level crossings of the polygonal interpolation of a
sampled path and scales by ``sqrt(pi/2) * mesh**(1 - H)``. A second,
independent estimate divides the exact time the polygonal path spends in a
small band around the level by the band width.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from fbmhedge import kernels
from fbmhedge.errors import NumericalError
from fbmhedge.fbm import FbmPath, check_hurst

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)

#: Default occupation band half-width is ``BANDWIDTH_FACTOR * mesh**H``.
BANDWIDTH_FACTOR = 20.0


@dataclass(frozen=True)
class CrossingCount:
    level: float
    start: int
    stop: int
    count: int


@dataclass(frozen=True)
class LocalTimeEstimate:
    level: float
    t0: float
    t1: float
    delta: float
    hurst: float
    count: int
    value: float


def _index_range(path: FbmPath, start: int, stop: int | None) -> tuple[int, int]:
    steps = path.grid.steps
    stop = steps if stop is None else int(stop)
    start = int(start)
    if not 0 <= start <= steps or not 0 <= stop <= steps:
        raise ValueError(f"index range [{start}, {stop}] outside grid of {steps} steps")
    return start, stop


def count_crossings(path: FbmPath, level: float, start: int = 0, stop: int | None = None) -> CrossingCount:
    """Segments ``[i, i+1]`` with ``start <= i < stop`` crossing ``level``.

    A crossing needs the two endpoints strictly on opposite sides; a node
    lying exactly on the level does not count.
    """
    start, stop = _index_range(path, start, stop)
    if stop <= start:
        return CrossingCount(float(level), start, stop, 0)
    segment = path.values[None, start : stop + 1]
    count = int(kernels.crossing_counts(segment, float(level))[0])
    return CrossingCount(float(level), start, stop, count)


def crossings_scale(delta: float, h: float) -> float:
    return SQRT_HALF_PI * delta ** (1.0 - h)


def estimate_local_time(
    path: FbmPath, level: float, start: int = 0, stop: int | None = None
) -> LocalTimeEstimate:
    crossing = count_crossings(path, level, start, stop)
    delta = path.grid.mesh
    return LocalTimeEstimate(
        level=crossing.level,
        t0=crossing.start * delta,
        t1=crossing.stop * delta,
        delta=delta,
        hurst=path.hurst,
        count=crossing.count,
        value=crossings_scale(delta, path.hurst) * crossing.count,
    )


def default_bandwidth(delta: float, h: float) -> float:
    return BANDWIDTH_FACTOR * delta**h


def occupation_histogram_oracle(
    path: FbmPath,
    level: float,
    bandwidth: float | None = None,
    start: int = 0,
    stop: int | None = None,
) -> float:
    """Occupation time of ``(level - eps, level + eps)`` divided by ``2 eps``.

    The time is computed exactly for the polygonal interpolant.
    """
    if bandwidth is None:
        bandwidth = default_bandwidth(path.grid.mesh, path.hurst)
    if not bandwidth > 0.0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    start, stop = _index_range(path, start, stop)
    if stop <= start:
        return 0.0
    segment = path.values[None, start : stop + 1]
    steps = kernels.occupation_steps(segment, level - bandwidth, level + bandwidth)[0]
    return float(steps) * path.grid.mesh / (2.0 * bandwidth)


def expected_local_time(level: float, h: float, horizon: float = 1.0, tol: float = 1e-10) -> float:
    """``E l^H(a, [0, T]) = (2 pi)^-1/2 int_0^T t^-H exp(-a^2 / (2 t^2H)) dt``.

    Substituting ``u = t^(1-H)`` turns the weakly singular integrand into

        (1 - H)^-1 (2 pi)^-1/2 exp(-a^2 / (2 u^(2H/(1-H))))

    on ``[0, T^(1-H)]``, which is bounded and constant when ``a = 0``.
    """
    h = check_hurst(h)
    if not horizon > 0.0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    a2 = float(level) ** 2
    upper = horizon ** (1.0 - h)
    prefactor = 1.0 / ((1.0 - h) * math.sqrt(2.0 * math.pi))
    power = 2.0 * h / (1.0 - h)

    def integrand(u):
        if a2 == 0.0:
            return 1.0
        scale = u**power  # underflows for H close to 1
        return math.exp(-0.5 * a2 / scale) if scale > 0.0 else 0.0

    # The integrand rises from 0 to 1 around u0 = (a^2/2)^(1/power) over many
    # decades when H is small. With s = ln(u/u0) the exponent is -exp(-power s)
    # and both sides become smooth. The upper side is measured from ``upper``
    # (s = r + span) so nothing overflows when u0 is tiny.
    u0 = (0.5 * a2) ** (1.0 / power)
    if 0.0 < u0 < upper:
        span = math.log(upper) - math.log(u0)
        pieces = [
            (lambda s: math.exp(-math.exp(min(power * s, 700.0)) - s), 0.0, math.inf, u0),
            (lambda r: math.exp(r - math.exp(-power * (r + span))), -span, 0.0, upper),
        ]
    else:
        pieces = [(integrand, 0.0, upper, 1.0)]
    value = 0.0
    for f, lo, hi, scale in pieces:
        piece_tol = tol / len(pieces)
        result = integrate.quad(
            f, lo, hi, epsabs=piece_tol / (prefactor * scale), epsrel=0.0, limit=500, full_output=True
        )
        abserr = result[1] * prefactor * scale
        if len(result) > 3 and abserr > piece_tol:
            raise NumericalError(
                f"quadrature for level={level}, H={h} reached error {abserr:.3g} "
                f"(requested {tol:.3g}): {result[3]}"
            )
        value += scale * result[0]
    return prefactor * value


def batch_local_time(values: np.ndarray, level: float, delta: float, h: float) -> np.ndarray:
    """Crossing estimate for each row of a batch of sampled paths."""
    counts = kernels.crossing_counts(values, float(level))
    return crossings_scale(delta, h) * counts


def batch_occupation(values: np.ndarray, level: float, delta: float, bandwidth: float) -> np.ndarray:
    steps = kernels.occupation_steps(values, level - bandwidth, level + bandwidth)
    return steps * delta / (2.0 * bandwidth)


def _consistency_chunk(indices, *, h, level, n_list, sim_steps, seed, method, bandwidth_factor):
    from fbmhedge.fbm import UniformGrid, simulate_fbm

    bh = simulate_fbm(UniformGrid(sim_steps), h, seed, indices, method)
    est = np.empty((len(indices), len(n_list)))
    occ = np.empty_like(est)
    for col, n in enumerate(n_list):
        coarse = bh[:, :: sim_steps // n]
        delta = 1.0 / n
        est[:, col] = batch_local_time(coarse, level, delta, h)
        occ[:, col] = batch_occupation(coarse, level, delta, bandwidth_factor * delta**h)
    return {"estimate": est, "oracle": occ}


def local_time_consistency(
    h: float,
    level: float = 0.0,
    n_list=(2**8, 2**10, 2**12, 2**14),
    paths: int = 10_000,
    seed: int = 0,
    *,
    workers: int | None = 1,
    method: str = "circulant",
    bandwidth_factor: float = BANDWIDTH_FACTOR,
    rel_tol: float = 0.03,
):
    """Crossings estimator against the occupation oracle and the exact mean.

    All meshes are restrictions of the same paths simulated on the finest grid
    ``max(n_list)``. Checks that the finest-mesh mean is within ``rel_tol`` of
    the expected local time and that the mean squared distance to the oracle
    decreases as the mesh is refined.
    """
    from fbmhedge.montecarlo import Check, ExperimentReport, is_strictly_decreasing, map_chunks, mean_and_stderr

    h = check_hurst(h)
    n_list = sorted(int(n) for n in n_list)
    sim_steps = n_list[-1]
    if any(sim_steps % n for n in n_list):
        raise ValueError(f"every grid size must divide the finest one, got {n_list}")
    out = map_chunks(
        _consistency_chunk, paths, workers,
        h=h, level=float(level), n_list=n_list, sim_steps=sim_steps, seed=int(seed),
        method=method, bandwidth_factor=bandwidth_factor,
    )
    expected = expected_local_time(level, h)
    scale = crossings_scale(1.0, h)
    report = ExperimentReport(
        "localtime",
        {"h": h, "level": level, "paths": paths, "seed": seed, "method": method,
         "bandwidth_factor": bandwidth_factor},
        ["level", "delta", "hurst", "count", "estimate", "oracle", "expected", "estimate_stderr", "l2"],
    )
    for col, n in enumerate(n_list):
        delta = 1.0 / n
        est = out["estimate"][:, col]
        mean, se = mean_and_stderr(est)
        report.rows.append(
            {"level": float(level), "delta": delta, "hurst": h,
             "count": float(np.mean(est)) / (scale * delta ** (1.0 - h)),
             "estimate": mean, "oracle": float(np.mean(out["oracle"][:, col])),
             "expected": expected, "estimate_stderr": se,
             "l2": float(np.mean((est - out["oracle"][:, col]) ** 2))}
        )
    finest = report.rows[-1]
    rel = abs(finest["estimate"] / expected - 1.0)
    report.checks.append(
        Check(f"mean estimate at delta={finest['delta']:g} within {rel_tol:.0%} of E l",
              bool(rel < rel_tol), f"{finest['estimate']:.5f} vs {expected:.5f} ({rel:.2%})")
    )
    l2 = report.column("l2")
    report.checks.append(
        Check("L2 distance to occupation oracle decreases with the mesh",
              is_strictly_decreasing(l2), " -> ".join(f"{v:.4f}" for v in l2))
    )
    return report
