"""Convex payoffs represented through their second-derivative measure.

A convex ``f`` with finitely many kinks is stored as an affine part plus an
atomic measure ``mu = f''``. The hedge ratio is the left derivative

    f'_-(x) = base_slope + sum_{a_j < x} mass_j,

so at a kink the atom is not yet counted (``sgn(0) = -1``). For a call with
strike ``K`` this gives the indicator ``1{x > K}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

#: Relative size below which slope jumps of a chord interpolant are roundoff.
ATOM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite positive measure ``sum_j mass_j * delta(a_j)``."""

    locations: tuple[float, ...] = ()
    masses: tuple[float, ...] = ()

    def __post_init__(self):
        locs = tuple(float(a) for a in self.locations)
        masses = tuple(float(m) for m in self.masses)
        if len(locs) != len(masses):
            raise ValueError("locations and masses differ in length")
        if not all(np.isfinite(locs)) or not all(np.isfinite(masses)):
            raise ValueError("atoms must be finite")
        if any(m <= 0.0 for m in masses):
            raise ValueError("atom masses must be positive")
        if any(b <= a for a, b in zip(locs, locs[1:])):
            raise ValueError("atom locations must be strictly increasing")
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "AtomicMeasure":
        pairs = sorted((float(a), float(m)) for a, m in pairs)
        return cls(tuple(a for a, _ in pairs), tuple(m for _, m in pairs))

    def __len__(self) -> int:
        return len(self.locations)

    @property
    def total_mass(self) -> float:
        return float(sum(self.masses))

    def integrate(self, g: Callable[[np.ndarray], np.ndarray]) -> float:
        """``int g dmu``."""
        if not self.locations:
            return 0.0
        return float(np.dot(g(np.asarray(self.locations)), self.masses))


@dataclass(frozen=True)
class ConvexPayoff:
    """Convex function ``f`` with ``f'' = measure`` and ``f(anchor_x) = anchor_f``.

    ``base_slope`` is the slope to the left of every atom. The measure fixes
    ``f`` only up to an affine term, which the anchor and base slope pin down.
    """

    measure: AtomicMeasure = field(default_factory=AtomicMeasure)
    anchor_x: float = 0.0
    anchor_f: float = 0.0
    base_slope: float = 0.0
    _locs: np.ndarray = field(init=False, repr=False, compare=False)
    _masses: np.ndarray = field(init=False, repr=False, compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("anchor_x", "anchor_f", "base_slope"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        locs = np.array(self.measure.locations, dtype=np.float64)
        masses = np.array(self.measure.masses, dtype=np.float64)
        cum = np.concatenate([[0.0], np.cumsum(masses)])
        for arr in (locs, masses, cum):
            arr.setflags(write=False)
        object.__setattr__(self, "_locs", locs)
        object.__setattr__(self, "_masses", masses)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def call(cls, strike: float) -> "ConvexPayoff":
        """``(x - K)^+``."""
        strike = float(strike)
        return cls(AtomicMeasure((strike,), (1.0,)), 0.0, max(-strike, 0.0), 0.0)

    @classmethod
    def straddle(cls, strike: float) -> "ConvexPayoff":
        """``|x - K|``."""
        strike = float(strike)
        return cls(AtomicMeasure((strike,), (2.0,)), 0.0, abs(strike), -1.0)

    @classmethod
    def affine(cls, slope: float, intercept: float = 0.0) -> "ConvexPayoff":
        return cls(AtomicMeasure(), 0.0, intercept, slope)

    @classmethod
    def from_dict(cls, data: dict) -> "ConvexPayoff":
        allowed = {"anchor_x", "anchor_f", "base_slope", "atoms"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown payoff keys: {sorted(unknown)}")
        return cls(
            AtomicMeasure.from_pairs(data.get("atoms", [])),
            data.get("anchor_x", 0.0),
            data.get("anchor_f", 0.0),
            data.get("base_slope", 0.0),
        )

    def to_dict(self) -> dict:
        return {
            "anchor_x": self.anchor_x,
            "anchor_f": self.anchor_f,
            "base_slope": self.base_slope,
            "atoms": [[a, m] for a, m in zip(self.measure.locations, self.measure.masses)],
        }

    @property
    def locations(self) -> np.ndarray:
        return self._locs

    @property
    def cumulative_masses(self) -> np.ndarray:
        """``cum[j]`` = mass of the ``j`` leftmost atoms (length ``len(atoms) + 1``)."""
        return self._cum

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = self.anchor_f + self.base_slope * (x - self.anchor_x)
        if len(self._locs):
            xs = x[..., None]
            out = out + np.sum(self._masses * np.maximum(xs - self._locs, 0.0), axis=-1)
            out = out - np.dot(self._masses, np.maximum(self.anchor_x - self._locs, 0.0))
        return float(out) if out.ndim == 0 else out

    def left_derivative(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = self.base_slope + self._cum[np.searchsorted(self._locs, x, side="left")]
        return float(out) if np.ndim(out) == 0 else out


def payoff_eval(p: ConvexPayoff, x):
    return p(x)


def left_derivative(p: ConvexPayoff, x):
    return p.left_derivative(x)


def parse_payoff(text: str) -> ConvexPayoff:
    """Parse a preset such as ``call:K=1`` or ``straddle:K=2.5``."""
    name, _, args = text.partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in args.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"malformed payoff parameter {item!r}")
        params[key.strip()] = float(value)
    presets = {"call": ConvexPayoff.call, "straddle": ConvexPayoff.straddle}
    if name not in presets:
        raise ValueError(f"unknown payoff preset {name!r}; expected one of {sorted(presets)}")
    if set(params) != {"K"}:
        raise ValueError(f"payoff preset {name!r} takes exactly one parameter K")
    return presets[name](params["K"])


@dataclass(frozen=True)
class LinearApprox:
    """Chord interpolant of a convex function on equidistant breakpoints."""

    breakpoints: np.ndarray
    payoff: ConvexPayoff

    def __call__(self, x):
        return self.payoff(x)

    def left_derivative(self, x):
        return self.payoff.left_derivative(x)

    @property
    def measure(self) -> AtomicMeasure:
        return self.payoff.measure


def build_linear_approx(f: Callable, a: float, b: float, m: int) -> LinearApprox:
    """Piecewise-linear interpolant of convex ``f`` through ``m + 1`` breakpoints.

    Outside ``[a, b]`` the first and last chords are extended linearly. Slope
    jumps smaller than ``ATOM_TOLERANCE`` times the slope scale are dropped;
    larger negative jumps mean ``f`` is not convex.
    """
    if int(m) != m or m < 2:
        raise ValueError(f"need at least 2 segments, got m={m}")
    if not a < b:
        raise ValueError(f"empty interval [{a}, {b}]")
    m = int(m)
    x = a + np.arange(m + 1) * ((b - a) / m)
    x[-1] = b
    y = np.array([float(f(v)) for v in x])
    slopes = np.diff(y) / np.diff(x)
    jumps = np.diff(slopes)
    scale = max(slopes[-1] - slopes[0], float(np.max(np.abs(slopes))), 1e-300)
    tol = ATOM_TOLERANCE * scale
    if np.any(jumps < -tol):
        worst = int(np.argmin(jumps))
        raise ValueError(
            f"function is not convex on [{a}, {b}]: slope drops by "
            f"{-jumps[worst]:.3g} at x={x[worst + 1]:.6g}"
        )
    keep = jumps > tol
    measure = AtomicMeasure(tuple(x[1:-1][keep]), tuple(jumps[keep]))
    x.setflags(write=False)
    return LinearApprox(x, ConvexPayoff(measure, x[0], y[0], slopes[0]))


def approx_converges_diagnostics(
    f: Callable,
    a: float,
    b: float,
    ms: Sequence[int],
    *,
    f_left_derivative: Callable,
    g: Callable,
    g_integral: float,
    probes: Sequence[float] | None = None,
) -> list[dict]:
    """Errors of the chord approximations ``P_m`` of ``f`` for each ``m``.

    ``g_integral`` is the exact ``int_[a,b] g dmu`` and ``probes`` are points
    of ``(a, b)`` where ``f'_-`` is continuous. Returns one row per ``m`` with
    the sup payoff error, the sup derivative error and the measure error.
    """
    if probes is None:
        probes = np.linspace(a, b, 103)[1:-1]
    probes = np.asarray(probes, dtype=np.float64)
    fx = np.array([float(f(v)) for v in probes])
    dfx = np.array([float(f_left_derivative(v)) for v in probes])
    rows = []
    for m in ms:
        approx = build_linear_approx(f, a, b, m)
        rows.append(
            {
                "m": int(m),
                "mesh": (b - a) / m,
                "payoff_error": float(np.max(np.abs(approx(probes) - fx))),
                "derivative_error": float(np.max(np.abs(approx.left_derivative(probes) - dfx))),
                "measure_error": abs(approx.measure.integrate(g) - g_integral),
            }
        )
    return rows
