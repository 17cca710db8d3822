"""Latency measurement harness.

Protocol: a fixed random input is generated once, the model runs `warmup`
untimed forwards, then `iters` timed forwards on a monotonic wall clock.
The median over the timed samples is the headline number; raw samples are
always kept so any statistic can be recomputed offline.
"""

from __future__ import annotations

import csv
import json
import platform
import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, FastViTError
from .model import Model


#: Resolution ladder used when no sizes are given (all divisible by 32).
DEFAULT_SWEEP_SIZES = (224, 256, 384, 512, 768, 1024)


def _host_descriptor() -> str:
    return f"{platform.system()}-{platform.release()}-{platform.machine()}"


@dataclass
class BenchResult:
    model_name: str
    mode: str
    input_hw: tuple[int, int]
    batch: int
    warmup: int
    iters: int
    samples_ms: list
    threads: int
    host: str

    @property
    def median_ms(self) -> float:
        # even sample counts take the mean of the two middle values
        return float(statistics.median(self.samples_ms))

    @property
    def p10_ms(self) -> float:
        return float(np.percentile(self.samples_ms, 10))

    @property
    def p90_ms(self) -> float:
        return float(np.percentile(self.samples_ms, 90))


def measure(model: Model, input_hw=(256, 256), warmup: int = 20,
            iters: int = 100, batch: int = 1, seed: int = 0) -> BenchResult:
    """Time repeated forwards of `model` on one fixed random input."""
    if iters < 1:
        raise ConfigError(f"empty sample: iters must be >= 1, got {iters}")
    if warmup < 0:
        raise ConfigError(f"warmup must be >= 0, got {warmup}")
    h, w = int(input_hw[0]), int(input_hw[1])
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((batch, 3, h, w)).astype(np.float32)
    threads = _kernels.thread_count()
    for _ in range(warmup):
        model.forward(x)
    samples = []
    for _ in range(iters):
        t0 = time.perf_counter()
        model.forward(x)
        t1 = time.perf_counter()
        samples.append((t1 - t0) * 1e3)
    return BenchResult(
        model_name=model.config.name, mode=model.mode, input_hw=(h, w),
        batch=batch, warmup=warmup, iters=iters, samples_ms=samples,
        threads=threads, host=_host_descriptor(),
    )


@dataclass
class SweepCell:
    model_name: str
    mode: str
    size: int
    result: BenchResult | None
    error: str | None


def resolution_sweep(models, sizes=DEFAULT_SWEEP_SIZES, warmup: int = 20,
                     iters: int = 100, batch: int = 1, seed: int = 0) -> list:
    """Measure every (model, size) pair; failures become per-cell errors."""
    cells = []
    for model in models:
        for size in sizes:
            try:
                res = measure(model, (size, size), warmup, iters, batch, seed)
                cells.append(SweepCell(model.config.name, model.mode,
                                       int(size), res, None))
            except FastViTError as exc:
                cells.append(SweepCell(model.config.name, model.mode,
                                       int(size), None, str(exc)))
    return cells


CSV_HEADER = ("model", "mode", "size", "batch", "iters",
              "median_ms", "p10_ms", "p90_ms", "threads")


def write_csv(results, path: str) -> None:
    """Write results to CSV plus a raw-samples sidecar (<path>.samples.json)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in results:
            writer.writerow([
                r.model_name, r.mode, r.input_hw[0], r.batch, r.iters,
                f"{r.median_ms:.6f}", f"{r.p10_ms:.6f}", f"{r.p90_ms:.6f}",
                r.threads,
            ])
    sidecar = {
        f"{r.model_name}|{r.mode}|{r.input_hw[0]}": r.samples_ms for r in results
    }
    with open(path + ".samples.json", "w") as fh:
        json.dump(sidecar, fh, indent=1)
