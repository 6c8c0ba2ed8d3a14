"""Seeded, chunked Monte Carlo driver and experiment reports.

Paths are split into fixed-size chunks whose boundaries do not depend on the
number of workers. Each chunk task draws its paths from per-path streams and
returns per-path arrays; results are concatenated in chunk order and reduced
in a single process. The statistics are therefore identical for any worker
count.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Sequence

import numpy as np

CHUNK_SIZE = 64


def default_workers() -> int:
    return os.cpu_count() or 1


def chunk_ranges(paths: int, chunk_size: int = CHUNK_SIZE) -> list[range]:
    if paths < 1:
        raise ValueError(f"need at least one path, got {paths}")
    return [range(s, min(s + chunk_size, paths)) for s in range(0, paths, chunk_size)]


def map_chunks(
    task: Callable[..., dict[str, np.ndarray]],
    paths: int,
    workers: int | None = 1,
    **kwargs: Any,
) -> dict[str, np.ndarray]:
    """Run ``task(indices, **kwargs)`` over all chunks and stack the results.

    ``task`` must be a module-level function returning a dict of arrays whose
    first axis runs over the chunk's paths.
    """
    chunks = chunk_ranges(paths)
    workers = default_workers() if workers is None else int(workers)
    fn = partial(task, **kwargs)
    if workers <= 1 or len(chunks) == 1:
        results = [fn(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
            results = list(pool.map(fn, chunks))
    return {key: np.concatenate([r[key] for r in results]) for key in results[0]}


def mean_and_stderr(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    mean = float(np.mean(x))
    stderr = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return mean, stderr


def is_decreasing_trend(values: Sequence[float]) -> bool:
    """True when the last value is below the first and the least-squares slope
    against position is negative.

    Monte Carlo frequencies along a refinement sequence are noisy, so a strict
    step-by-step decrease is not required.
    """
    y = np.asarray(values, dtype=np.float64)
    if y.size < 2:
        return False
    x = np.arange(y.size, dtype=np.float64)
    slope = np.polyfit(x, y, 1)[0]
    return bool(y[-1] < y[0] and slope < 0.0)


def is_strictly_decreasing(values: Sequence[float]) -> bool:
    y = np.asarray(values, dtype=np.float64)
    return bool(y.size >= 2 and np.all(np.diff(y) < 0.0))


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}" + (f": {self.detail}" if self.detail else "")


def format_value(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


@dataclass
class ExperimentReport:
    """Rows of one experiment plus the assertions evaluated on them."""

    name: str
    params: dict[str, Any]
    columns: list[str]
    rows: list[dict[str, Any]] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_value(row[c]) for c in self.columns])
        return buf.getvalue()

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def summary(self) -> str:
        params = ", ".join(f"{k}={format_value(v)}" for k, v in self.params.items())
        lines = [f"{self.name} ({params})"]
        lines.extend("  " + c.line() for c in self.checks)
        return "\n".join(lines)
