"""Expected hedging error of the call and related numerical studies.

For ``f(x) = (x - K)^+`` and ``S0 = 1`` the limiting error is
``J = sqrt(2/pi) * k0 * K * l^H(ln K, [0, 1])``. All functions take ``k0``
and default to ``k0 = sqrt(pi/2)``, where ``J = K * l^H(ln K, [0, 1])``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fbmhedge.fbm import UniformGrid, check_hurst, simulate_fbm
from fbmhedge.localtime import SQRT_HALF_PI, batch_local_time, expected_local_time
from fbmhedge.montecarlo import Check, ExperimentReport, is_strictly_decreasing, map_chunks, mean_and_stderr

DEFAULT_TOL = 1e-10
DEFAULT_STRIKES = tuple(np.round(np.arange(0.2, 3.0 + 1e-9, 0.05), 10))
DEFAULT_HURSTS = tuple(np.round(np.arange(0.55, 0.95 + 1e-9, 0.05), 10))
DEFAULT_CONTINUITY_HURSTS = (0.9, 0.8, 0.7, 0.6, 0.55, 0.52, 0.51, 0.505, 0.501)


def expected_hedging_error_call(
    strike: float, h: float, k0: float = SQRT_HALF_PI, tol: float = DEFAULT_TOL
) -> float:
    """``E J`` for a call, i.e. ``sqrt(2/pi) k0 K E l^H(ln K, [0, 1])``."""
    if not strike > 0.0:
        raise ValueError(f"strike must be positive, got {strike}")
    local = expected_local_time(math.log(strike), h, 1.0, tol)
    return math.sqrt(2.0 / math.pi) * k0 * strike * local


@dataclass
class ErrorSurface:
    strikes: np.ndarray
    hursts: np.ndarray
    values: np.ndarray = field(repr=False)  # values[i, j] at (strikes[j], hursts[i])
    tolerance: float
    k0: float = SQRT_HALF_PI

    def rows(self) -> list[dict]:
        return [
            {"K": float(k), "H": float(h), "EJ": float(self.values[i, j])}
            for i, h in enumerate(self.hursts)
            for j, k in enumerate(self.strikes)
        ]

    def argmax_strikes(self) -> np.ndarray:
        return self.strikes[np.argmax(self.values, axis=1)]


def error_surface(
    strikes: Sequence[float] = DEFAULT_STRIKES,
    hursts: Sequence[float] = DEFAULT_HURSTS,
    tol: float = DEFAULT_TOL,
    k0: float = SQRT_HALF_PI,
) -> ErrorSurface:
    strikes = np.asarray(strikes, dtype=np.float64)
    hursts = np.asarray(hursts, dtype=np.float64)
    if strikes.size == 0 or hursts.size == 0:
        raise ValueError("strike and Hurst grids must be nonempty")
    values = np.array(
        [[expected_hedging_error_call(k, h, k0, tol) for k in strikes] for h in hursts]
    )
    return ErrorSurface(strikes, hursts, values, tol, k0)


def surface_report(
    surface: ErrorSurface, decay_strike: float = 5.0, decay_ratio: float = 0.01
) -> ExperimentReport:
    """Surface rows plus shape checks: finiteness, the ``K = 1`` closed form,
    the maximum in ``K`` at the grid point nearest 1, and decay by
    ``decay_strike`` to below ``decay_ratio`` of the peak."""
    report = ExperimentReport(
        "surface",
        {"k0": surface.k0, "tol": surface.tolerance, "n_strikes": surface.strikes.size,
         "n_hursts": surface.hursts.size, "decay_strike": decay_strike},
        ["K", "H", "EJ"],
        surface.rows(),
    )
    v = surface.values
    report.checks.append(
        Check("all entries finite and nonnegative", bool(np.all(np.isfinite(v)) and np.all(v >= 0)))
    )
    scale = math.sqrt(2.0 / math.pi) * surface.k0
    on_grid = np.isclose(surface.strikes, 1.0, rtol=0, atol=1e-12)
    if on_grid.any():
        j = int(np.argmax(on_grid))
        exact = scale / ((1.0 - surface.hursts) * math.sqrt(2.0 * math.pi))
        err = np.max(np.abs(v[:, j] / exact - 1.0))
        report.checks.append(Check("K=1 column matches 1/((1-H) sqrt(2 pi))", bool(err < 1e-9), f"max rel err {err:.2e}"))
    nearest = surface.strikes[np.argmin(np.abs(surface.strikes - 1.0))]
    argmax = surface.argmax_strikes()
    report.checks.append(
        Check(
            f"max over K attained at K={nearest:g} for every H",
            bool(np.all(argmax == nearest)),
            "argmax K per H: " + ", ".join(f"{k:g}" for k in argmax),
        )
    )
    peaks = v.max(axis=1)
    tail = np.array(
        [expected_hedging_error_call(decay_strike, h, surface.k0, surface.tolerance) for h in surface.hursts]
    )
    ratios = tail / peaks
    report.checks.append(
        Check(
            f"EJ(K={decay_strike:g}) < {decay_ratio:g} * peak for every H",
            bool(np.all(ratios < decay_ratio)),
            "ratios: " + ", ".join(f"H={h:g}:{r:.4f}" for h, r in zip(surface.hursts, ratios)),
        )
    )
    return report


def h_continuity_study(
    strike: float,
    hursts: Sequence[float] = DEFAULT_CONTINUITY_HURSTS,
    k0: float = SQRT_HALF_PI,
    tol: float = DEFAULT_TOL,
) -> ExperimentReport:
    """``E J`` along Hurst values decreasing to 1/2, against the Brownian limit."""
    hursts = [check_hurst(h) for h in hursts]
    if any(h <= 0.5 for h in hursts):
        raise ValueError("Hurst values must exceed 1/2")
    if not is_strictly_decreasing(hursts):
        raise ValueError("Hurst values must decrease towards 1/2")
    limit = expected_hedging_error_call(strike, 0.5, k0, tol)
    report = ExperimentReport(
        "continuity", {"K": strike, "k0": k0, "tol": tol}, ["H", "EJ", "abs_diff"]
    )
    for h in hursts:
        ej = expected_hedging_error_call(strike, h, k0, tol)
        report.rows.append({"H": h, "EJ": ej, "abs_diff": abs(ej - limit)})
    report.rows.append({"H": 0.5, "EJ": limit, "abs_diff": 0.0})
    diffs = report.column("abs_diff")[:-1]
    report.checks.append(
        Check(
            "|EJ(H) - EJ(1/2)| decreases monotonically as H decreases to 1/2",
            is_strictly_decreasing(diffs),
            " -> ".join(f"{d:.3g}" for d in diffs),
        )
    )
    return report


def _local_time_chunk(indices, *, h, level, sim_steps, seed, method):
    bh = simulate_fbm(UniformGrid(sim_steps), h, seed, indices, method)
    return {"lt": batch_local_time(bh, level, 1.0 / sim_steps, h)}


def mc_vs_quadrature(
    strike: float,
    h: float,
    paths: int = 10_000,
    sim_steps: int = 2**14,
    seed: int = 0,
    *,
    k0: float = SQRT_HALF_PI,
    s0: float = 1.0,
    workers: int | None = 1,
    method: str = "circulant",
    z_bound: float = 4.0,
) -> ExperimentReport:
    """Compare the Monte Carlo mean of the crossings estimate of ``J`` with the
    quadrature value of ``E J``."""
    h = check_hurst(h)
    if not strike > 0.0:
        raise ValueError(f"strike must be positive, got {strike}")
    out = map_chunks(
        _local_time_chunk, paths, workers,
        h=h, level=math.log(strike / s0), sim_steps=int(sim_steps), seed=int(seed), method=method,
    )
    scale = math.sqrt(2.0 / math.pi) * k0 * strike
    mc_mean, mc_se = mean_and_stderr(scale * out["lt"])
    quad = scale * expected_local_time(math.log(strike / s0), h)
    if mc_se > 0:
        z = (mc_mean - quad) / mc_se
    else:
        z = 0.0 if mc_mean == quad else math.copysign(math.inf, mc_mean - quad)
    report = ExperimentReport(
        "mc-vs-quad",
        {"K": strike, "h": h, "k0": k0, "s0": s0, "paths": paths, "sim_steps": sim_steps, "seed": seed, "method": method},
        ["K", "H", "mc_mean", "mc_stderr", "quad", "z"],
        [{"K": strike, "H": h, "mc_mean": mc_mean, "mc_stderr": mc_se, "quad": quad, "z": z}],
    )
    report.checks.append(Check(f"|z| < {z_bound:g}", bool(abs(z) < z_bound), f"z={z:.3f}"))
    return report
