"""Command-line entry point: ``fbmhedge <command> [--config FILE] [options]``.

Every option can also be given in a flat YAML config file using the option
name with underscores as key; command-line options override the file. Each
command writes CSV files into ``--output`` (default: ``$FBMHEDGE_OUTPUT_DIR``
or the current directory), prints a summary with the outcome of every check,
and exits with status 0 only if all checks pass.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import yaml

from fbmhedge import analysis, kernels
from fbmhedge.fbm import (
    UniformGrid,
    fbm_law_check,
    restrict_prices,
    sample_fbm_cholesky,
    sample_fbm_circulant,
    to_price_path,
)
from fbmhedge.hedging import (
    CostSchedule,
    corollary_fast_costs_experiment,
    error_decomposition,
    limit_error_j,
    run_hedge,
    theorem_convergence_experiment,
    turnover_by_atoms,
)
from fbmhedge.localtime import local_time_consistency
from fbmhedge.montecarlo import Check, ExperimentReport, default_workers
from fbmhedge.payoff import ConvexPayoff, parse_payoff

OUTPUT_ENV = "FBMHEDGE_OUTPUT_DIR"

COMMANDS = ("fbm-check", "localtime", "hedge", "theorem", "corollary", "surface", "continuity", "mc-vs-quad")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    payoff: Any = "call:K=1"
    h: float = 0.75
    s0: float = 1.0
    k0: float = 1.0
    alpha: Any = "theorem"
    n_list: list = dataclasses.field(default_factory=lambda: [2**p for p in range(6, 12)])
    sim_steps: int | None = None
    paths: int = 500
    seed: int = 42
    output: str | None = None
    workers: int | None = None
    epsilons: list = dataclasses.field(default_factory=lambda: [0.1, 0.05, 0.02])
    method: str = "circulant"
    tol: float = analysis.DEFAULT_TOL
    strikes: list = dataclasses.field(default_factory=lambda: list(analysis.DEFAULT_STRIKES))
    hursts: list | None = None
    K: float = 1.0
    level: float = 0.0
    steps: int = 8
    bandwidth_factor: float = 20.0


# Per-command defaults that differ from the dataclass defaults.
COMMAND_DEFAULTS: dict[str, dict[str, Any]] = {
    "fbm-check": {"h": 0.6, "paths": 100_000},
    "localtime": {"h": 0.5, "paths": 10_000, "n_list": [2**8, 2**10, 2**12, 2**14]},
    "hedge": {"n_list": [2**p for p in range(6, 13)], "sim_steps": 2**14},
    "theorem": {},
    "corollary": {"alpha": 1.0},
    "surface": {"k0": analysis.SQRT_HALF_PI},
    "continuity": {"k0": analysis.SQRT_HALF_PI},
    "mc-vs-quad": {"K": 1.5, "paths": 10_000, "sim_steps": 2**14, "k0": analysis.SQRT_HALF_PI},
}

FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"command"}


def parse_int_list(text: str) -> list[int]:
    """Comma-separated integers; ``a,b,...,z`` continues the progression.

    The progression is geometric when ``b / a`` is an integer greater than 1,
    arithmetic otherwise.
    """
    items = [s.strip() for s in str(text).split(",") if s.strip()]
    if "..." not in items:
        return [int(s) for s in items]
    if items.count("...") != 1 or items.index("...") != 2 or len(items) != 4:
        raise ConfigError(f"expected 'a,b,...,z', got {text!r}")
    a, b, z = int(items[0]), int(items[1]), int(items[3])
    out = [a]
    if b % a == 0 and b // a > 1:
        while out[-1] * (b // a) <= z:
            out.append(out[-1] * (b // a))
    elif b > a:
        while out[-1] + (b - a) <= z:
            out.append(out[-1] + (b - a))
    else:
        raise ConfigError(f"progression {text!r} does not increase")
    if out[-1] != z:
        raise ConfigError(f"progression {text!r} does not reach {z}")
    return out


def parse_float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(s) for s in str(text).split(",") if s.strip()]


def _as_int_list(v):
    return [int(x) for x in v] if isinstance(v, (list, tuple)) else parse_int_list(v)


def _optional_int(v):
    return None if v is None else int(v)


def _alpha(v):
    return "theorem" if v == "theorem" else float(v)


COERCE: dict[str, Callable[[Any], Any]] = {
    "h": float, "s0": float, "k0": float, "alpha": _alpha, "n_list": _as_int_list,
    "sim_steps": _optional_int, "paths": int, "seed": int, "workers": _optional_int,
    "epsilons": parse_float_list, "method": str, "tol": float, "strikes": parse_float_list,
    "hursts": lambda v: None if v is None else parse_float_list(v), "K": float, "level": float,
    "steps": int, "bandwidth_factor": float, "output": lambda v: None if v is None else str(v),
    "payoff": lambda v: v,
}


def load_config_file(path: str) -> dict[str, Any]:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a key-value mapping")
    unknown = sorted(set(data) - FIELDS - {"command"})
    if unknown:
        raise ConfigError(f"unknown config keys in {path}: {unknown}")
    return data


def build_config(command: str, file_values: dict[str, Any], flag_values: dict[str, Any]) -> ExperimentConfig:
    if file_values.get("command", command) != command:
        raise ConfigError(f"config file is for {file_values['command']!r}, not {command!r}")
    merged = dict(COMMAND_DEFAULTS.get(command, {}))
    merged.update({k: v for k, v in file_values.items() if k != "command"})
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    values = {}
    for key, raw in merged.items():
        try:
            values[key] = COERCE[key](raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value for {key}: {raw!r} ({exc})") from None
    cfg = ExperimentConfig(command=command, **values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    def bad(field, why):
        raise ConfigError(f"invalid value for {field}: {getattr(cfg, field)!r} ({why})")

    if not 0.0 < cfg.h < 1.0:
        bad("h", "must lie in (0, 1)")
    if cfg.command in ("hedge", "theorem", "corollary") and cfg.h <= 0.5:
        bad("h", "hedging experiments need H > 1/2")
    if not cfg.s0 > 0.0:
        bad("s0", "must be positive")
    if not cfg.k0 >= 0.0:
        bad("k0", "must be nonnegative")
    if cfg.paths < 1:
        bad("paths", "must be positive")
    if any(n < 1 for n in cfg.n_list) or not cfg.n_list:
        bad("n_list", "must be positive integers")
    if cfg.workers is not None and cfg.workers < 1:
        bad("workers", "must be positive")
    if cfg.method not in ("circulant", "cholesky"):
        bad("method", "must be 'circulant' or 'cholesky'")
    if any(e <= 0 for e in cfg.epsilons) or not cfg.epsilons:
        bad("epsilons", "must be positive")
    if not cfg.tol > 0.0:
        bad("tol", "must be positive")
    if not cfg.K > 0.0:
        bad("K", "must be positive")
    if any(k <= 0 for k in cfg.strikes):
        bad("strikes", "must be positive")
    if cfg.steps < 1:
        bad("steps", "must be positive")
    if cfg.alpha != "theorem" and not 0.0 < cfg.alpha <= 1.0:
        bad("alpha", "must be 'theorem' or lie in (0, 1]")


def resolve_payoff(source) -> ConvexPayoff:
    if isinstance(source, ConvexPayoff):
        return source
    if isinstance(source, dict):
        return ConvexPayoff.from_dict(source)
    source = str(source)
    if os.path.isfile(source):
        with open(source) as fh:
            data = yaml.safe_load(fh)
        if not isinstance(data, dict):
            raise ConfigError(f"payoff file {source} must contain a mapping")
        return ConvexPayoff.from_dict(data)
    return parse_payoff(source)


# --------------------------------------------------------------------------
# commands


def _cmd_fbm_check(cfg, out):
    report = fbm_law_check(cfg.h, cfg.paths, cfg.steps, cfg.seed, method=cfg.method, workers=cfg.workers)
    return [(report, out / "fbm_check.csv")]


def _cmd_localtime(cfg, out):
    report = local_time_consistency(
        cfg.h, cfg.level, cfg.n_list, cfg.paths, cfg.seed,
        workers=cfg.workers, method=cfg.method, bandwidth_factor=cfg.bandwidth_factor,
    )
    return [(report, out / "localtime.csv")]


def _cmd_hedge(cfg, out):
    payoff = resolve_payoff(cfg.payoff)
    sim_steps = cfg.sim_steps or 2**14
    sampler = sample_fbm_circulant if cfg.method == "circulant" else sample_fbm_cholesky
    path = sampler(UniformGrid(sim_steps), cfg.h, (cfg.seed, 0))
    prices = to_price_path(path, cfg.s0)
    path_report = ExperimentReport(
        "path", {"h": cfg.h, "s0": cfg.s0, "sim_steps": sim_steps, "seed": cfg.seed},
        ["t", "bh", "price"],
        [{"t": t, "bh": b, "price": p} for t, b, p in zip(path.grid.times, path.values, prices.prices)],
    )
    alpha = 1.0 - cfg.h if cfg.alpha == "theorem" else cfg.alpha
    schedule = CostSchedule(cfg.k0, alpha)
    j_hat = limit_error_j(payoff, prices, cfg.k0)
    report = ExperimentReport(
        "hedge",
        {"payoff": payoff.to_dict(), "h": cfg.h, "s0": cfg.s0, "k0": cfg.k0, "alpha": alpha,
         "sim_steps": sim_steps, "seed": cfg.seed, "J_hat": j_hat},
        ["n", "trading_gain", "turnover", "terminal_value", "payoff_terminal", "realized_error", "i1", "i2"],
    )
    identity_ok, decomposition_ok = True, True
    for n in cfg.n_list:
        if sim_steps % n:
            raise ConfigError(f"invalid value for n_list: {n} does not divide sim_steps={sim_steps}")
        coarse = restrict_prices(prices, n)
        run = run_hedge(payoff, coarse, schedule)
        f1 = run.payoff_at_maturity
        row = {"n": n, "trading_gain": run.trading_gain, "turnover": run.turnover_cost_raw,
               "terminal_value": run.terminal_value, "payoff_terminal": f1,
               "realized_error": run.terminal_value - f1, "i1": math.nan, "i2": math.nan}
        if math.isclose(alpha, 1.0 - cfg.h, abs_tol=1e-12):
            dec = error_decomposition(run, cfg.h)
            row["i1"], row["i2"] = dec.i1, dec.i2
            scale = max(1.0, abs(dec.i1), abs(cfg.k0 * dec.i2), abs(f1))
            identity_ok &= abs(dec.residual) <= 1e-12 * scale
        by_atoms = turnover_by_atoms(payoff, coarse)
        decomposition_ok &= abs(by_atoms - run.turnover_cost_raw) <= 1e-12 * max(1.0, by_atoms)
        report.rows.append(row)
    if math.isclose(alpha, 1.0 - cfg.h, abs_tol=1e-12):
        report.checks.append(Check("V1 - f(S1) = i1 - k0 i2 on every grid", bool(identity_ok)))
    report.checks.append(Check("turnover equals its atom-by-atom decomposition", bool(decomposition_ok)))
    report.checks.append(Check("J_hat is nonnegative", bool(j_hat >= 0), f"J_hat={j_hat:.6g}"))
    return [(path_report, out / "path.csv"), (report, out / "hedge.csv")]


def _cmd_theorem(cfg, out):
    if cfg.alpha != "theorem" and not math.isclose(cfg.alpha, 1.0 - cfg.h, abs_tol=1e-12):
        raise ConfigError(f"invalid value for alpha: {cfg.alpha!r} (this command uses alpha = 1 - H)")
    report = theorem_convergence_experiment(
        resolve_payoff(cfg.payoff), cfg.h, cfg.k0, cfg.n_list, cfg.paths, cfg.seed,
        s0=cfg.s0, sim_steps=cfg.sim_steps, epsilons=cfg.epsilons, workers=cfg.workers, method=cfg.method,
    )
    return [(report, out / "theorem.csv")]


def _cmd_corollary(cfg, out):
    if cfg.alpha == "theorem":
        raise ConfigError("invalid value for alpha: 'theorem' (fast cost decay needs alpha > 1 - H)")
    if not cfg.alpha > 1.0 - cfg.h:
        raise ConfigError(f"invalid value for alpha: {cfg.alpha!r} (must exceed 1 - H = {1.0 - cfg.h})")
    report = corollary_fast_costs_experiment(
        resolve_payoff(cfg.payoff), cfg.h, cfg.k0, cfg.alpha, cfg.n_list, cfg.paths, cfg.seed,
        s0=cfg.s0, sim_steps=cfg.sim_steps, epsilons=cfg.epsilons, workers=cfg.workers, method=cfg.method,
    )
    return [(report, out / "corollary.csv")]


def _cmd_surface(cfg, out):
    hursts = cfg.hursts if cfg.hursts is not None else analysis.DEFAULT_HURSTS
    surface = analysis.error_surface(cfg.strikes, hursts, cfg.tol, cfg.k0)
    return [(analysis.surface_report(surface), out / "surface.csv")]


def _cmd_continuity(cfg, out):
    hursts = cfg.hursts if cfg.hursts is not None else analysis.DEFAULT_CONTINUITY_HURSTS
    return [(analysis.h_continuity_study(cfg.K, hursts, cfg.k0, cfg.tol), out / "continuity.csv")]


def _cmd_mc_vs_quad(cfg, out):
    report = analysis.mc_vs_quadrature(
        cfg.K, cfg.h, cfg.paths, cfg.sim_steps or 2**14, cfg.seed,
        k0=cfg.k0, s0=cfg.s0, workers=cfg.workers, method=cfg.method,
    )
    return [(report, out / "mc_vs_quad.csv")]


HANDLERS = {
    "fbm-check": _cmd_fbm_check,
    "localtime": _cmd_localtime,
    "hedge": _cmd_hedge,
    "theorem": _cmd_theorem,
    "corollary": _cmd_corollary,
    "surface": _cmd_surface,
    "continuity": _cmd_continuity,
    "mc-vs-quad": _cmd_mc_vs_quad,
}


def run(cfg: ExperimentConfig, stream=None) -> int:
    """Execute one experiment; returns the process exit status."""
    stream = sys.stdout if stream is None else stream
    out = Path(cfg.output or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    if cfg.workers is None:
        cfg = dataclasses.replace(cfg, workers=default_workers())
    reports = HANDLERS[cfg.command](cfg, out)
    ok = True
    for report, path in reports:
        report.write_csv(path)
        print(report.summary(), file=stream)
        print(f"  wrote {path}", file=stream)
        ok &= report.passed
    print(f"{cfg.command}: {'all checks passed' if ok else 'SOME CHECKS FAILED'} "
          f"(kernels: {kernels.BACKEND})", file=stream)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbmhedge",
        description="Hedging under geometric fractional Brownian motion with transaction costs.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat YAML file with option values")
        p.add_argument("--payoff", help="preset such as call:K=1 or straddle:K=1, or a payoff file")
        p.add_argument("--h", type=float, help="Hurst parameter")
        p.add_argument("--s0", type=float)
        p.add_argument("--k0", type=float)
        p.add_argument("--alpha", help="cost decay exponent, or 'theorem' for 1 - H")
        p.add_argument("--n-list", "--n", dest="n_list", help="trading grid sizes, e.g. 64,128,...,2048")
        p.add_argument("--sim-steps", dest="sim_steps", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--output", help=f"output directory (default ${OUTPUT_ENV} or .)")
        p.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
        p.add_argument("--epsilons", help="comma-separated exceedance thresholds")
        p.add_argument("--method", choices=["circulant", "cholesky"])
        p.add_argument("--tol", type=float, help="quadrature tolerance")
        p.add_argument("--strikes", help="comma-separated strike grid")
        p.add_argument("--hursts", help="comma-separated Hurst grid")
        p.add_argument("--K", dest="K", type=float, help="strike")
        p.add_argument("--level", type=float)
        p.add_argument("--steps", type=int, help="grid steps for fbm-check")
        p.add_argument("--bandwidth-factor", dest="bandwidth_factor", type=float)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    flags = {k: v for k, v in vars(args).items() if k in FIELDS}
    try:
        file_values = load_config_file(args.config) if args.config else {}
        cfg = build_config(args.command, file_values, flags)
        return run(cfg)
    except ConfigError as exc:
        parser.error(str(exc))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
