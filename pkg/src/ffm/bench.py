"""CPU efficiency harness: training-pass timing, peak tensor bytes, step latency.

Timings here are a CPU trend check (parallel scan vs the model's own
recurrent loop, linear scaling of the GRU).  They say nothing about GPU
speedups.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import baselines, cell
from . import numerics as nx

HEADER = (
    "# CPU benchmark: relative trends only (parallel scan vs recurrent loop, scaling in T); "
    "no absolute or GPU speed claim"
)


@dataclass
class BenchRow:
    model: str
    T: int
    workers: int
    median_seconds: float
    peak_bytes: int
    equivalent: bool | None


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)

    def get(self, model: str, T: int, workers: int | None = None) -> BenchRow:
        for r in self.rows:
            if r.model == model and r.T == T and (workers is None or r.workers == workers):
                return r
        raise KeyError((model, T, workers))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(HEADER + "\n")
            w = csv.DictWriter(fh, fieldnames=list(BenchRow.__dataclass_fields__))
            w.writeheader()
            for r in self.rows:
                w.writerow(asdict(r))

    def table(self) -> str:
        lines = [HEADER, f"{'model':<14}{'T':>6}{'workers':>9}{'median s':>12}{'peak MiB':>11}  equiv"]
        for r in self.rows:
            eq = "-" if r.equivalent is None else ("ok" if r.equivalent else "FAIL")
            lines.append(
                f"{r.model:<14}{r.T:>6}{r.workers:>9}{r.median_seconds:>12.5f}{r.peak_bytes / 2**20:>11.3f}  {eq}"
            )
        return "\n".join(lines)


def median_time(fn: Callable[[], object], repeats: int = 5, warmup: int = 2) -> float:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def peak_bytes(fn: Callable[[], object]) -> int:
    with nx.MemoryTracker() as mem:
        fn()
    return mem.peak


def _train_pass(forward: Callable[[], nx.Tensor]) -> Callable[[], None]:
    def run():
        with nx.Tape() as tape:
            y = forward()
            loss = nx.sum(nx.mul(y, y))
        tape.backward(loss)

    return run


def make_pass(model: str, T: int, d=8, m=8, c=4, batch=1, chunk=1024, seed=0, backward=True):
    """Build a zero-argument callable running one forward(+backward) pass."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(T, batch, d))
    if model in ("ffm", "ffm_recurrent"):
        params = cell.init(d, m, c, seed=seed, max_chunk=max(chunk, 1))
        if model == "ffm":
            fwd = lambda: cell.forward(params, X, chunk=chunk if T > chunk else None)[0]  # noqa: E731
        else:
            fwd = lambda: cell.forward_recurrent(params, X)[0]  # noqa: E731
    elif model == "gru":
        params = baselines.gru_init(d, 2 * m * c, seed)
        fwd = lambda: baselines.gru_forward(params, X)[0]  # noqa: E731
    else:
        raise ValueError(f"unknown bench model {model!r}")
    return _train_pass(fwd) if backward else (lambda: fwd())


def _equivalent(T: int, d, m, c, batch, chunk, seed) -> bool:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(T, batch, d))
    params = cell.init(d, m, c, seed=seed, max_chunk=chunk)
    a, _ = cell.forward(params, X, chunk=chunk if T > chunk else None)
    b, _ = cell.forward_recurrent(params, X)
    return bool(np.abs(a.data - b.data).max() <= 1e-8)


def bench_train_pass(
    models: list[str],
    T_list: list[int],
    workers_list: list[int],
    d: int = 8,
    m: int = 8,
    c: int = 4,
    batch: int = 1,
    repeats: int = 5,
    warmup: int = 2,
    chunk: int = 1024,
    seed: int = 0,
) -> BenchReport:
    """Median forward+backward time and peak tensor bytes per (model, T, workers)."""
    if repeats < 5 or warmup < 2:
        raise ValueError("need at least 5 timed runs after 2 warmups")
    report = BenchReport()
    old = nx.get_workers()
    try:
        for model in models:
            for T in T_list:
                for w in workers_list:
                    nx.set_workers(w)
                    run = make_pass(model, T, d, m, c, batch, chunk, seed)
                    secs = median_time(run, repeats, warmup)
                    peak = peak_bytes(run)
                    eq = _equivalent(T, d, m, c, batch, chunk, seed) if model == "ffm" else None
                    report.rows.append(BenchRow(model, T, w, secs, peak, eq))
    finally:
        nx.set_workers(old)
    return report


def step_latency(t_elapsed: int, d=8, m=8, c=4, repeats=200, seed=0) -> float:
    """Median latency of one recurrent inference step after ``t_elapsed`` steps."""
    rng = np.random.default_rng(seed)
    params = cell.init(d, m, c, seed=seed)
    state = cell.RecurrentState.zeros(m, c)
    for x in rng.normal(size=(t_elapsed, d)):
        _, state = cell.forward_step(params, x, state)
    x = rng.normal(size=d)
    return median_time(lambda: cell.forward_step(params, x, state), repeats, warmup=10)
