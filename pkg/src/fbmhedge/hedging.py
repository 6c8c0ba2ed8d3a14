"""Discrete hedging of convex payoffs with proportional transaction costs.

The hedger holds ``f'_-(S_{t_{i-1}})`` shares over ``(t_{i-1}, t_i]`` on the
grid ``t_i = i/n``, starts with capital ``f(S_0)`` and pays
``k_n * S_{t_{i-1}} * |change in position|`` at each rebalancing, with
``k_n = k0 * n**-alpha``. Entering the position at ``t = 0`` is free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fbmhedge import kernels
from fbmhedge.fbm import PricePath, UniformGrid, check_hurst, restrict_prices, simulate_fbm
from fbmhedge.localtime import batch_local_time, estimate_local_time
from fbmhedge.montecarlo import (
    Check,
    ExperimentReport,
    is_decreasing_trend,
    map_chunks,
    mean_and_stderr,
)
from fbmhedge.payoff import ConvexPayoff

SQRT_TWO_OVER_PI = math.sqrt(2.0 / math.pi)

DEFAULT_EPSILONS = (0.1, 0.05, 0.02)
DEFAULT_SIM_STEPS = 2**14
#: The simulation grid must be at least this many times finer than any trading grid.
MIN_REFINEMENT = 4


@dataclass(frozen=True)
class CostSchedule:
    """Cost coefficient ``k_n = k0 * n**-alpha`` for ``n`` trading intervals."""

    k0: float
    alpha: float

    def __post_init__(self):
        if not self.k0 >= 0.0:
            raise ValueError(f"k0 must be nonnegative, got {self.k0}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    @classmethod
    def theorem(cls, k0: float, h: float) -> "CostSchedule":
        """The critical regime ``alpha = 1 - H``."""
        return cls(k0, 1.0 - check_hurst(h))

    def rate(self, n: int) -> float:
        return self.k0 * float(n) ** -self.alpha


@dataclass(frozen=True)
class HedgeRun:
    """One hedge along a price path.

    ``replication_error`` is ``trading_gain - (f(S_n) - f(S_0))``, evaluated
    as minus the sum of ``mass_j * |S_i - a_j|`` over steps that move across
    an atom. The two forms agree in exact arithmetic; this one is exactly
    zero when no atom is crossed and never positive.
    """

    payoff: ConvexPayoff
    schedule: CostSchedule
    prices: np.ndarray = field(repr=False)
    positions: np.ndarray = field(repr=False)
    trading_gain: float
    turnover_cost_raw: float
    terminal_value: float
    replication_error: float

    @property
    def n(self) -> int:
        return len(self.prices) - 1

    @property
    def cost_rate(self) -> float:
        return self.schedule.rate(self.n)

    @property
    def payoff_at_maturity(self) -> float:
        return self.payoff(self.prices[-1])


@dataclass(frozen=True)
class ErrorDecomposition:
    """``realized_error = i1 - k0 * i2`` where ``i1`` is the Riemann-sum error
    of the frictionless hedge and ``i2`` the turnover scaled by ``(1/n)**(1-H)``."""

    i1: float
    i2: float
    realized_error: float
    k0: float

    @property
    def residual(self) -> float:
        return self.realized_error - (self.i1 - self.k0 * self.i2)


def _price_array(prices) -> np.ndarray:
    if isinstance(prices, PricePath):
        if prices.grid.horizon != 1.0:
            raise ValueError("hedging runs on the unit horizon [0, 1]")
        s = prices.prices
    else:
        s = np.asarray(prices, dtype=np.float64)
    if s.ndim != 1 or s.size < 2:
        raise ValueError("need a one-dimensional price path with at least one step")
    if not np.all(s > 0.0) or not np.all(np.isfinite(s)):
        raise ValueError("prices must be finite and strictly positive")
    return s


def run_hedge(payoff: ConvexPayoff, prices, schedule: CostSchedule) -> HedgeRun:
    """Hedge ``payoff`` along ``prices`` (one entry per trading date, T = 1)."""
    s = _price_array(prices)
    ratio = payoff.left_derivative(s)
    positions = ratio[:-1]
    gain = math.fsum(positions * np.diff(s))
    turnover = math.fsum(s[:-1] * np.abs(np.diff(ratio)))
    rate = schedule.rate(s.size - 1)
    terminal = payoff(s[0]) + gain - rate * turnover
    positions = positions.copy()
    positions.setflags(write=False)
    return HedgeRun(payoff, schedule, s, positions, gain, turnover, terminal, -crossing_overshoot(payoff, s))


def crossing_overshoot(payoff: ConvexPayoff, prices) -> float:
    """``sum_j mass_j * sum_i |S_i - a_j|`` over steps ``i`` across atom ``a_j``."""
    s = _price_array(prices)
    total = []
    for a, mass in zip(payoff.measure.locations, payoff.measure.masses):
        above = s > a
        crossed = above[1:] != above[:-1]
        total.append(mass * math.fsum(np.abs(s[1:][crossed] - a)))
    return math.fsum(total)


def error_decomposition(run: HedgeRun, h: float) -> ErrorDecomposition:
    h = check_hurst(h)
    if not math.isclose(run.schedule.alpha, 1.0 - h, rel_tol=0.0, abs_tol=1e-12):
        raise ValueError(
            f"decomposition needs alpha = 1 - H = {1.0 - h}, got {run.schedule.alpha}"
        )
    f1 = run.payoff(run.prices[-1])
    i2 = (1.0 / run.n) ** (1.0 - h) * run.turnover_cost_raw
    return ErrorDecomposition(run.replication_error, i2, run.terminal_value - f1, run.schedule.k0)


def turnover_by_atoms(payoff: ConvexPayoff, prices) -> float:
    """Unscaled turnover summed atom by atom.

    Equals ``run_hedge(...).turnover_cost_raw`` because a price move shifts
    the hedge ratio by the masses of the atoms it passes, all with one sign.
    """
    s = _price_array(prices)
    total = 0.0
    for a, mass in zip(payoff.measure.locations, payoff.measure.masses):
        above = (s > a).astype(np.float64)
        total += mass * math.fsum(s[:-1] * np.abs(np.diff(above)))
    return total


def frictionless_convergence(
    payoff: ConvexPayoff, prices: PricePath, n_list: Sequence[int]
) -> list[dict]:
    """Riemann-sum error ``i1(n)`` of the frictionless hedge on one fine path.

    Every trading grid is a restriction of the same simulated path.
    """
    if prices.grid.horizon != 1.0:
        raise ValueError("hedging runs on the unit horizon [0, 1]")
    free = CostSchedule(0.0, 1.0)
    rows = []
    for n in n_list:
        run = run_hedge(payoff, restrict_prices(prices, n), free)
        rows.append({"n": int(n), "trading_gain": run.trading_gain, "i1": run.replication_error})
    return rows


def _check_atoms_positive(payoff: ConvexPayoff) -> None:
    if np.any(payoff.locations <= 0.0):
        raise ValueError("atoms at nonpositive prices have no log-level; remove them")


def limit_error_j(payoff: ConvexPayoff, prices: PricePath, k0: float) -> float:
    """Per-path estimate of the limiting hedging error

        J = sqrt(2/pi) * k0 * sum_j a_j * mass_j * l(ln(a_j / S0), [0, 1])

    with the local time estimated from level crossings on the path's own grid.
    """
    _check_atoms_positive(payoff)
    if k0 == 0.0:
        return 0.0
    terms = [
        a * m * estimate_local_time(prices.underlying, math.log(a / prices.s0)).value
        for a, m in zip(payoff.measure.locations, payoff.measure.masses)
    ]
    return SQRT_TWO_OVER_PI * k0 * math.fsum(terms)


def _limit_error_unit(payoff: ConvexPayoff, bh: np.ndarray, s0: float, h: float) -> np.ndarray:
    """Batch ``J`` per unit ``k0``."""
    delta = 1.0 / (bh.shape[1] - 1)
    out = np.zeros(bh.shape[0])
    for a, m in zip(payoff.measure.locations, payoff.measure.masses):
        out += a * m * batch_local_time(bh, math.log(a / s0), delta, h)
    return SQRT_TWO_OVER_PI * out


def _hedge_chunk(indices, *, payoff, h, s0, n_list, rates, sim_steps, seed, method):
    bh = simulate_fbm(UniformGrid(sim_steps), h, seed, indices, method)
    s = s0 * np.exp(bh)
    locs = np.ascontiguousarray(payoff.locations)
    cum = np.ascontiguousarray(payoff.cumulative_masses)
    f0 = payoff(s0)
    v1 = np.empty((len(indices), len(n_list)))
    error = np.empty_like(v1)
    for col, (n, rate) in enumerate(zip(n_list, rates)):
        gain, turnover, overshoot = kernels.hedge_sums(s, sim_steps // n, locs, cum, payoff.base_slope)
        v1[:, col] = f0 + gain - rate * turnover
        error[:, col] = -overshoot - rate * turnover
    return {
        "v1": v1,
        "error": error,
        "f1": np.atleast_1d(payoff(s[:, -1])),
        "j_unit": _limit_error_unit(payoff, bh, s0, h),
    }


def _validate_grid(n_list: Sequence[int], sim_steps: int | None) -> tuple[list[int], int]:
    n_list = [int(n) for n in n_list]
    if not n_list or min(n_list) < 1:
        raise ValueError("n_list must contain positive integers")
    if sim_steps is None:
        sim_steps = max(DEFAULT_SIM_STEPS, MIN_REFINEMENT * max(n_list))
    sim_steps = int(sim_steps)
    bad = [n for n in n_list if sim_steps % n]
    if bad:
        raise ValueError(f"trading grid sizes {bad} do not divide sim_steps={sim_steps}")
    if sim_steps < MIN_REFINEMENT * max(n_list):
        raise ValueError(
            f"sim_steps={sim_steps} must be at least {MIN_REFINEMENT}x the finest trading grid"
        )
    return n_list, sim_steps


def _hedging_experiment(
    name, payoff, h, schedule, n_list, paths, seed, s0, sim_steps, epsilons,
    workers, method, subtract_j,
) -> tuple[ExperimentReport, dict]:
    n_list, sim_steps = _validate_grid(n_list, sim_steps)
    _check_atoms_positive(payoff)
    if not s0 > 0.0:
        raise ValueError(f"initial price must be positive, got {s0}")
    rates = [schedule.rate(n) for n in n_list]
    out = map_chunks(
        _hedge_chunk, paths, workers,
        payoff=payoff, h=h, s0=float(s0), n_list=n_list, rates=rates,
        sim_steps=sim_steps, seed=int(seed), method=method,
    )
    j_hat = schedule.k0 * out["j_unit"]
    error = out["error"]  # V1 - f(S1), free of the cancellation in that difference
    deviation = error + j_hat[:, None] if subtract_j else error
    exceed_cols = [f"exceed_{eps:.2f}" for eps in epsilons]
    columns = ["n", "mean_V1", "mean_D", "var_D", *exceed_cols, "mean_J_hat", "mc_stderr"]
    params = {
        "payoff": payoff.to_dict(), "h": h, "s0": s0, "k0": schedule.k0,
        "alpha": schedule.alpha, "n_list": n_list, "sim_steps": sim_steps,
        "paths": paths, "seed": seed, "method": method,
    }
    report = ExperimentReport(name, params, columns)
    mean_j = float(np.mean(j_hat))
    for col, n in enumerate(n_list):
        d = deviation[:, col]
        mean_d, se_d = mean_and_stderr(d)
        row = {
            "n": n,
            "mean_V1": float(np.mean(out["v1"][:, col])),
            "mean_D": mean_d,
            "var_D": float(np.var(d, ddof=1)) if paths > 1 else 0.0,
            "mean_J_hat": mean_j,
            "mc_stderr": se_d,
        }
        for eps, key in zip(epsilons, exceed_cols):
            row[key] = float(np.mean(np.abs(d) > eps))
        report.rows.append(row)
    for eps, key in zip(epsilons, exceed_cols):
        freq = report.column(key)
        report.checks.append(
            Check(
                f"exceedance P(|D_n| > {eps:g}) decreasing in n",
                is_decreasing_trend(freq),
                " -> ".join(f"{v:.3f}" for v in freq),
            )
        )
    return report, {"v1": out["v1"], "f1": out["f1"], "error": error, "j_hat": j_hat, "deviation": deviation}


def _ratio_check(report: ExperimentReport, eps: float, bound: float) -> Check:
    key = f"exceed_{eps:.2f}"
    freq = report.column(key)
    ratio = freq[-1] / freq[0] if freq[0] > 0 else float("inf")
    return Check(
        f"exceedance at eps={eps:g}: final/initial < {bound:g}",
        bool(ratio < bound),
        f"{freq[-1]:.3f}/{freq[0]:.3f} = {ratio:.3f}",
    )


def theorem_convergence_experiment(
    payoff: ConvexPayoff,
    h: float,
    k0: float,
    n_list: Sequence[int],
    paths: int,
    seed: int,
    *,
    s0: float = 1.0,
    sim_steps: int | None = None,
    epsilons: Sequence[float] = DEFAULT_EPSILONS,
    workers: int | None = 1,
    method: str = "circulant",
) -> ExperimentReport:
    """Monte Carlo check that ``V1 - f(S1) + J -> 0`` in probability when
    ``k_n = k0 * n**-(1-H)``.

    ``D_n = V1(theta^n) - f(S1) + J_hat`` with ``J_hat`` estimated on the same
    simulated path. Also checks that the option is subhedged at the finest
    trading grid.
    """
    h = check_hurst(h, long_memory=True)
    schedule = CostSchedule.theorem(k0, h)
    report, raw = _hedging_experiment(
        "theorem", payoff, h, schedule, n_list, paths, seed, s0, sim_steps,
        tuple(epsilons), workers, method, subtract_j=True,
    )
    if 0.1 in epsilons:
        report.checks.append(_ratio_check(report, 0.1, 0.5))
    shortfall = -raw["error"][:, -1]
    mean, se = mean_and_stderr(shortfall)
    if se > 0:
        z = mean / se
    else:
        z = 0.0 if mean == 0 else math.copysign(math.inf, mean)
    report.checks.append(
        Check(
            f"subhedging: E[f(S1) - V1] > 0 at n={report.rows[-1]['n']} with z > 3",
            bool(mean > 0 and z > 3),
            f"mean={mean:.5g}, stderr={se:.3g}, z={z:.2f}",
        )
    )
    report.params["shortfall_mean"] = mean
    report.params["shortfall_stderr"] = se
    return report


def corollary_fast_costs_experiment(
    payoff: ConvexPayoff,
    h: float,
    k0: float,
    alpha: float,
    n_list: Sequence[int],
    paths: int,
    seed: int,
    *,
    s0: float = 1.0,
    sim_steps: int | None = None,
    epsilons: Sequence[float] = DEFAULT_EPSILONS,
    workers: int | None = 1,
    method: str = "circulant",
) -> ExperimentReport:
    """Monte Carlo check that ``V1 -> f(S1)`` when costs decay faster than
    ``n**-(1-H)``. Here ``D_n = V1(theta^n) - f(S1)``; the ``mean_J_hat``
    column still reports the critical-regime ``J`` for reference."""
    h = check_hurst(h, long_memory=True)
    if not alpha > 1.0 - h:
        raise ValueError(f"alpha must exceed 1 - H = {1.0 - h}, got {alpha}")
    schedule = CostSchedule(k0, alpha)
    report, _ = _hedging_experiment(
        "corollary", payoff, h, schedule, n_list, paths, seed, s0, sim_steps,
        tuple(epsilons), workers, method, subtract_j=False,
    )
    if 0.05 in epsilons:
        report.checks.append(_ratio_check(report, 0.05, 0.5))
    return report
