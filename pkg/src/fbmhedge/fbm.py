"""Exact sampling of fractional Brownian motion on uniform grids.

Two exact samplers are provided: a Cholesky factorization of the full
covariance matrix (reference, O(n^2) memory) and circulant embedding of
fractional Gaussian noise (Davies-Harte, O(n log n)). Random streams are keyed
by ``(seed, path_index)`` so a path never depends on which worker drew it or
in which order.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from fbmhedge.errors import NumericalError

logger = logging.getLogger(__name__)

#: Eigenvalues of the fGn circulant above ``-EIGEN_CLAMP`` are treated as roundoff.
EIGEN_CLAMP = 1e-10

SeedKey = tuple[int, int]


def check_hurst(h: float, *, long_memory: bool = False) -> float:
    """Validate a Hurst parameter, optionally requiring ``h > 1/2``."""
    h = float(h)
    if not 0.0 < h < 1.0:
        raise ValueError(f"Hurst parameter must lie in (0, 1), got {h}")
    if long_memory and h <= 0.5:
        raise ValueError(f"this operation requires H > 1/2, got {h}")
    return h


@dataclass(frozen=True)
class UniformGrid:
    """Nodes ``t_i = i * horizon / steps`` for ``i = 0..steps``."""

    steps: int
    horizon: float = 1.0

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        if not self.horizon > 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def mesh(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.mesh

    def __len__(self) -> int:
        return self.steps + 1


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FbmPath:
    grid: UniformGrid
    hurst: float
    values: np.ndarray = field(repr=False)
    seed_key: SeedKey | None = None

    def __post_init__(self):
        check_hurst(self.hurst)
        values = _frozen(self.values)
        if values.shape != (self.grid.steps + 1,):
            raise ValueError(
                f"expected {self.grid.steps + 1} values, got shape {values.shape}"
            )
        if values[0] != 0.0:
            raise ValueError("fractional Brownian motion starts at 0")
        if not np.all(np.isfinite(values)):
            raise ValueError("path contains non-finite values")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class PricePath:
    s0: float
    underlying: FbmPath
    prices: np.ndarray = field(repr=False)

    def __post_init__(self):
        prices = _frozen(self.prices)
        if prices.shape != self.underlying.values.shape:
            raise ValueError("prices and underlying path differ in length")
        if not np.all(prices > 0.0):
            raise ValueError("prices must be strictly positive")
        object.__setattr__(self, "prices", prices)

    @property
    def grid(self) -> UniformGrid:
        return self.underlying.grid


def fbm_covariance(s, t, h: float):
    """Covariance ``(s^2H + t^2H - |t-s|^2H) / 2`` of standard fBm.

    Broadcasts over array arguments.
    """
    h = check_hurst(h)
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("times must be nonnegative")
    two_h = 2.0 * h
    cov = 0.5 * (s**two_h + t**two_h - np.abs(t - s) ** two_h)
    return float(cov) if cov.ndim == 0 else cov


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for path ``index`` of experiment ``seed``."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)))
    )


@lru_cache(maxsize=4)
def _cholesky_factor(steps: int, horizon: float, h: float) -> np.ndarray:
    t = np.arange(1, steps + 1) * (horizon / steps)
    cov = fbm_covariance(t[:, None], t[None, :], h)
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"fBm covariance is not numerically positive definite "
            f"(steps={steps}, H={h})"
        ) from exc
    factor.setflags(write=False)
    return factor


@lru_cache(maxsize=8)
def _circulant_sqrt_eigs(steps: int, h: float) -> np.ndarray | None:
    """Square roots of the circulant eigenvalues for unit-mesh fGn.

    Returns None when an eigenvalue is negative beyond the clamp tolerance.
    """
    k = np.arange(steps + 1, dtype=np.float64)
    two_h = 2.0 * h
    gamma = 0.5 * (np.abs(k + 1) ** two_h - 2.0 * k**two_h + np.abs(k - 1) ** two_h)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.fft.fft(row).real
    if eig.min() < -EIGEN_CLAMP:
        return None
    out = np.sqrt(np.clip(eig, 0.0, None))
    out.setflags(write=False)
    return out


def _cholesky_rows(grid: UniformGrid, h: float, seed: int, indices) -> np.ndarray:
    factor = _cholesky_factor(grid.steps, grid.horizon, h)
    z = np.stack([path_rng(seed, i).standard_normal(grid.steps) for i in indices])
    out = np.zeros((len(indices), grid.steps + 1))
    out[:, 1:] = z @ factor.T
    return out


def _circulant_rows(grid: UniformGrid, h: float, seed: int, indices) -> np.ndarray:
    n = grid.steps
    sqrt_eig = _circulant_sqrt_eigs(n, h)
    if sqrt_eig is None:
        logger.warning(
            "circulant embedding has negative eigenvalues (steps=%d, H=%g); "
            "falling back to Cholesky", n, h,
        )
        return _cholesky_rows(grid, h, seed, indices)
    m = 2 * n
    z = np.empty((len(indices), m), dtype=np.complex128)
    for row, i in enumerate(indices):
        normals = path_rng(seed, i).standard_normal((2, m))
        z[row].real = normals[0]
        z[row].imag = normals[1]
    noise = np.fft.fft(z * sqrt_eig, axis=1).real[:, :n]
    noise *= grid.mesh**h / np.sqrt(m)
    out = np.zeros((len(indices), n + 1))
    np.cumsum(noise, axis=1, out=out[:, 1:])
    return out


_SAMPLERS = {"cholesky": _cholesky_rows, "circulant": _circulant_rows}


def simulate_fbm(
    grid: UniformGrid,
    h: float,
    seed: int,
    indices: Sequence[int],
    method: str = "circulant",
) -> np.ndarray:
    """Sample the fBm paths ``indices`` of experiment ``seed`` as array rows.

    Returns an array of shape ``(len(indices), grid.steps + 1)`` with a zero
    first column.
    """
    h = check_hurst(h)
    try:
        sampler = _SAMPLERS[method]
    except KeyError:
        raise ValueError(f"unknown sampling method {method!r}") from None
    return sampler(grid, h, int(seed), list(indices))


def sample_fbm_cholesky(grid: UniformGrid, h: float, seed_key: SeedKey) -> FbmPath:
    seed, index = seed_key
    values = simulate_fbm(grid, h, seed, [index], method="cholesky")[0]
    return FbmPath(grid, h, values, (int(seed), int(index)))


def sample_fbm_circulant(grid: UniformGrid, h: float, seed_key: SeedKey) -> FbmPath:
    seed, index = seed_key
    values = simulate_fbm(grid, h, seed, [index], method="circulant")[0]
    return FbmPath(grid, h, values, (int(seed), int(index)))


def to_price_path(path: FbmPath, s0: float) -> PricePath:
    if not s0 > 0.0:
        raise ValueError(f"initial price must be positive, got {s0}")
    return PricePath(float(s0), path, s0 * np.exp(path.values))


def refine_restrict(path: FbmPath, coarse_steps: int) -> FbmPath:
    """Restrict a path to the coarser grid with ``coarse_steps`` steps.

    The coarse nodes are a subset of the fine nodes, so this is exact
    subsampling: node ``i`` of the result is node ``i * steps // coarse_steps``
    of the input.
    """
    steps = path.grid.steps
    if int(coarse_steps) != coarse_steps or coarse_steps < 1 or steps % coarse_steps:
        raise ValueError(f"{coarse_steps} does not divide the grid size {steps}")
    stride = steps // int(coarse_steps)
    grid = UniformGrid(int(coarse_steps), path.grid.horizon)
    return FbmPath(grid, path.hurst, path.values[::stride], path.seed_key)


def restrict_prices(prices: PricePath, coarse_steps: int) -> PricePath:
    """Price path counterpart of :func:`refine_restrict`."""
    coarse = refine_restrict(prices.underlying, coarse_steps)
    stride = prices.grid.steps // coarse.grid.steps
    return PricePath(prices.s0, coarse, prices.prices[::stride])


def _moments_chunk(indices, *, grid, h, seed, method):
    return {"x": simulate_fbm(grid, h, seed, indices, method)[:, 1:]}


def fbm_law_check(
    h: float,
    paths: int = 100_000,
    steps: int = 8,
    seed: int = 0,
    *,
    method: str = "circulant",
    workers: int | None = 1,
    increment: tuple[float, float] = (0.25, 0.75),
    z_bound: float = 4.0,
):
    """Compare empirical second moments of sampled paths with the exact law.

    Rows cover every covariance entry ``E[B_s B_t]`` of the grid nodes, the
    increment moment ``E|B_t - B_s|^2`` for ``increment = (s, t)`` and the
    self-similarity ratio ``Var(B_{T/2}) / Var(B_T)``.
    """
    from fbmhedge.montecarlo import Check, ExperimentReport, map_chunks, mean_and_stderr

    h = check_hurst(h)
    grid = UniformGrid(steps)
    x = map_chunks(_moments_chunk, paths, workers, grid=grid, h=h, seed=int(seed), method=method)["x"]
    t = grid.times[1:]
    report = ExperimentReport(
        "fbm-check",
        {"h": h, "paths": paths, "steps": steps, "seed": seed, "method": method},
        ["statistic", "s", "t", "empirical", "exact", "stderr", "z"],
    )

    def add(stat, s, u, samples, exact):
        mean, se = mean_and_stderr(samples)
        report.rows.append(
            {"statistic": stat, "s": s, "t": u, "empirical": mean, "exact": exact,
             "stderr": se, "z": (mean - exact) / se}
        )

    for i in range(steps):
        for j in range(i, steps):
            add("cov", t[i], t[j], x[:, i] * x[:, j], fbm_covariance(t[i], t[j], h))
    cov_z = np.array([r["z"] for r in report.rows])
    terminal = report.rows[-1]  # (t_n, t_n) is the last pair enumerated
    report.checks.append(
        Check(f"Var(B_T) within {z_bound:g} SE of T^2H", bool(abs(terminal["z"]) < z_bound),
              f"{terminal['empirical']:.5f} vs {terminal['exact']:.5f}, z={terminal['z']:.2f}")
    )
    report.checks.append(
        Check(f"all covariance entries within {z_bound:g} SE", bool(np.all(np.abs(cov_z) < z_bound)),
              f"max |z| = {np.max(np.abs(cov_z)):.2f}")
    )

    s_inc, t_inc = increment
    nodes = {round(v, 12): k for k, v in enumerate(t)}
    if round(s_inc, 12) in nodes and round(t_inc, 12) in nodes:
        d = x[:, nodes[round(t_inc, 12)]] - x[:, nodes[round(s_inc, 12)]]
        add("incr2", s_inc, t_inc, d * d, abs(t_inc - s_inc) ** (2 * h))
        row = report.rows[-1]
        report.checks.append(
            Check(f"E|B_t - B_s|^2 within {z_bound:g} SE of |t-s|^2H", bool(abs(row["z"]) < z_bound),
                  f"{row['empirical']:.5f} vs {row['exact']:.5f}, z={row['z']:.2f}")
        )

    if steps % 2 == 0:
        half, full = x[:, steps // 2 - 1] ** 2, x[:, -1] ** 2
        m_half, m_full = half.mean(), full.mean()
        ratio = m_half / m_full
        # delta method for a ratio of correlated means
        c = np.cov(half, full)
        var = ratio**2 * (c[0, 0] / m_half**2 + c[1, 1] / m_full**2 - 2 * c[0, 1] / (m_half * m_full)) / paths
        se = math.sqrt(var)
        exact = 0.5 ** (2 * h)
        z = (ratio - exact) / se
        report.rows.append(
            {"statistic": "selfsim", "s": t[steps // 2 - 1], "t": t[-1], "empirical": ratio,
             "exact": exact, "stderr": se, "z": z}
        )
        report.checks.append(
            Check(f"Var(B_T/2)/Var(B_T) within {z_bound:g} SE of 2^-2H", bool(abs(z) < z_bound),
                  f"{ratio:.5f} vs {exact:.5f}, z={z:.2f}")
        )
    return report
