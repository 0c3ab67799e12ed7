"""Seeded Monte Carlo execution of an experiment matrix."""
from __future__ import annotations

import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from ..metrics import EpisodeMetrics, ExperimentSummary, aggregate, episode_metrics
from ..policy import PolicyConfig
from ..sim import run_episode
from .config import Cell, ExperimentMatrix

MASK64 = (1 << 64) - 1
WORKERS_ENV = "PEMSIM_WORKERS"


def splitmix64(x: int) -> int:
    """One round of the SplitMix64 output function (a bijection on 64 bits)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def episode_seed(base_seed: int, cell_index: int, run_index: int) -> int:
    """``splitmix64(splitmix64(splitmix64(base) ^ cell) ^ run)``, all mod 2**64."""
    return splitmix64(splitmix64(splitmix64(base_seed & MASK64) ^ cell_index) ^ run_index)


def _g6(x: float | None) -> float | None:
    """Round to 6 significant digits so records survive a CSV round trip."""
    if x is None:
        return None
    if math.isnan(x) or math.isinf(x):
        return x
    return float(f"{x:.6g}")


@dataclass(frozen=True)
class RunRecord:
    cell_id: str
    run_index: int
    seed: int
    scenario: str
    scenario_id: str
    scenario_params: tuple[tuple[str, float], ...]
    pem: str
    pem_params: tuple[tuple[str, float], ...]
    min_spatial_m: float | None
    min_temporal_s: float | None
    collided: bool
    detection_freq: float | None
    max_nondetect_s: float | None
    outcome: str
    min_ttc_s: float | None = None
    vel_unknown_frac: float | None = None
    anomaly: str = ""

    @property
    def key(self) -> tuple[str, int]:
        return self.cell_id, self.run_index


def _scrub(text: str) -> str:
    """Anomaly messages go into CSV cells: drop control characters."""
    return "".join(ch if ch.isprintable() else " " for ch in text)


def make_record(cell: Cell, run_index: int, seed: int, m: EpisodeMetrics | None, anomaly: str = "") -> RunRecord:
    anomaly = _scrub(anomaly)
    sp = tuple((k, _g6(v)) for k, v in cell.scenario_params)
    pp = tuple((k, _g6(v)) for k, v in cell.pem_params)
    if m is None:
        return RunRecord(cell.cell_id, run_index, seed, cell.scenario_name, cell.scenario_id, sp,
                         cell.pem_name, pp, None, None, False, None, None, "anomaly", None, None, anomaly)
    return RunRecord(cell.cell_id, run_index, seed, cell.scenario_name, cell.scenario_id, sp, cell.pem_name, pp,
                     _g6(m.min_spatial_clearance), _g6(m.min_temporal_clearance), m.collided,
                     _g6(m.detection_frequency), _g6(m.max_nondetection_interval), m.outcome,
                     _g6(m.min_ttc), _g6(m.velocity_unknown_fraction), anomaly)


def simulate(cell: Cell, policy: PolicyConfig, seed: int) -> EpisodeMetrics:
    """Default episode runner: simulate and reduce to metrics."""
    return episode_metrics(run_episode(cell.scenario, cell.pem, policy, seed))


EpisodeRunner = Callable[[Cell, PolicyConfig, int], EpisodeMetrics]


def _run_one(args) -> tuple[RunRecord, EpisodeMetrics | None]:
    cell, run_index, seed, policy, runner = args
    try:
        m = runner(cell, policy, seed)
    except Exception as exc:  # crash isolation: one bad episode never sinks the batch
        tb = traceback.extract_tb(exc.__traceback__)
        where = f" at {tb[-1].name}:{tb[-1].lineno}" if tb else ""
        msg = f"{type(exc).__name__}: {exc}{where}"
        return make_record(cell, run_index, seed, None, msg), None
    return make_record(cell, run_index, seed, m), m


def default_parallelism() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentResult:
    records: tuple[RunRecord, ...]
    summaries: tuple[tuple[Cell, ExperimentSummary], ...]


def iter_jobs(matrix: ExperimentMatrix, runner: EpisodeRunner):
    for cell in matrix.cells:
        for r in range(matrix.runs_per_cell):
            yield cell, r, episode_seed(matrix.base_seed, cell.index, r), matrix.policy, runner


def run_experiment(matrix: ExperimentMatrix, parallelism: int | None = None,
                   runner: EpisodeRunner = simulate,
                   progress: Callable[[int, int], None] | None = None) -> ExperimentResult:
    """Run every (cell, run) episode and aggregate per cell.

    Results depend only on the matrix: seeds are a pure function of
    ``(base_seed, cell index, run index)`` and records are sorted before
    aggregation, so worker count and completion order never matter.
    """
    workers = default_parallelism() if parallelism is None else parallelism
    if workers < 1:
        raise ValueError("parallelism must be at least 1")
    jobs = list(iter_jobs(matrix, runner))
    total = len(jobs)
    results: list[tuple[RunRecord, EpisodeMetrics | None]] = []
    if workers == 1:
        for i, job in enumerate(jobs, 1):
            results.append(_run_one(job))
            if progress:
                progress(i, total)
    else:
        chunk = max(1, min(32, total // (workers * 8) or 1))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, res in enumerate(pool.map(_run_one, jobs, chunksize=chunk), 1):
                results.append(res)
                if progress:
                    progress(i, total)
    results.sort(key=lambda rm: rm[0].key)
    return ExperimentResult(tuple(r for r, _ in results), tuple(_summaries(matrix.cells, results)))


def _summaries(cells: Sequence[Cell], results: Iterable[tuple[RunRecord, EpisodeMetrics | None]]):
    by_cell: dict[str, dict[int, EpisodeMetrics]] = {}
    anomalies: dict[str, int] = {}
    for rec, m in results:
        if m is None:
            anomalies[rec.cell_id] = anomalies.get(rec.cell_id, 0) + 1
        else:
            by_cell.setdefault(rec.cell_id, {})[rec.run_index] = m
    out = []
    for cell in cells:
        runs = by_cell.get(cell.cell_id)
        params = {"scenario": cell.scenario_name, "scenario_id": cell.scenario_id,
                  **dict(cell.scenario_params), "pem": cell.pem_name, **dict(cell.pem_params)}
        if not runs:
            continue
        out.append((cell, aggregate(runs, params, anomalies.get(cell.cell_id, 0))))
    return out
