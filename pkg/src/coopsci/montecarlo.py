"""Monte Carlo sensitivity sweeps: parameter sampling, batch execution, binning.

Every run is a pure function of ``(master seed, run index)``, so a batch gives
identical results for any worker count.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from coopsci.core import EstimationError, RngStream
from coopsci.sim import ARENA, PATH_KINDS, PathSpec, ScenarioConfig, simulate

log = logging.getLogger(__name__)

AXES = ("range_noise_std", "gps_noise_std", "pos_offset", "vel_offset_std", "path")
SIGMA_LABELS = ("0σ", "1/2σ", "σ", "3/2σ", "2σ", "5/2σ", "3σ")
SUMMARY_COLUMNS = ("bin", "num_runs", "mean_m", "std_m", "median_m", "max_m", "min_m", "divergence_pct")

_S_PARAMS = 1


@dataclass(frozen=True)
class SweepConfig:
    """Sampling plan for a batch of runs.

    Noise scales are half-normal with the given standard deviations; the
    initial position offset is a uniform integer in ``0..pos_offset_max``
    meters and the path is uniform over ``paths``.
    """

    num_runs: int = 40000
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    range_noise_scale: float = 5.0
    gps_noise_scale: float = 3.0
    vel_offset_scale: float = 1.0
    pos_offset_max: int = 10
    paths: tuple[str, ...] = PATH_KINDS
    randomize_placement: bool = True
    seed: int = 2024

    def __post_init__(self):
        if self.num_runs <= 0:
            raise ValueError(f"num_runs must be > 0, got {self.num_runs}")
        for name in ("range_noise_scale", "gps_noise_scale", "vel_offset_scale", "pos_offset_max"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.paths or any(p not in PATH_KINDS for p in self.paths):
            raise ValueError(f"paths must be a non-empty subset of {PATH_KINDS}")


@dataclass(frozen=True, eq=False)
class RunResult:
    run_index: int
    seed: int
    path: str
    range_noise_std: float
    gps_noise_std: float
    vel_offset_std: float
    pos_offset: float
    mean_error: float
    rms_error: float
    max_error: float
    diverged: bool = False
    reason: str = ""
    errors: np.ndarray | None = None

    def param(self, axis: str):
        if axis not in AXES:
            raise ValueError(f"unknown axis {axis!r}; expected one of {AXES}")
        return getattr(self, axis)

    def key(self) -> tuple:
        """Everything except the per-epoch errors, for equality checks."""
        return (self.run_index, self.seed, self.path, self.range_noise_std, self.gps_noise_std,
                self.vel_offset_std, self.pos_offset, self.mean_error, self.rms_error, self.max_error,
                self.diverged, self.reason)


@dataclass(frozen=True)
class BinSummary:
    label: str
    num_runs: int
    mean: float | None = None
    std: float | None = None
    median: float | None = None
    max: float | None = None
    min: float | None = None
    divergence_pct: float | None = None


def _place(spec: PathSpec, rng: np.random.Generator, margin: float = 1.0) -> PathSpec:
    """Random center (path kept inside the arena) and starting phase."""
    lo, hi = ARENA
    ex, ey = spec.extent()
    cx = rng.uniform(lo + ex + margin, hi - ex - margin)
    cy = rng.uniform(lo + ey + margin, hi - ey - margin)
    return replace(spec, center=(cx, cy), phase=float(rng.uniform(0.0, 1.0)))


def sample_run(config: SweepConfig, run_index: int) -> ScenarioConfig:
    """Scenario for one run; a pure function of ``(config.seed, run_index)``."""
    if not 0 <= run_index < config.num_runs:
        raise IndexError(f"run_index {run_index} outside [0, {config.num_runs})")
    rng = RngStream(config.seed, run_index).generator(_S_PARAMS)
    range_std = abs(rng.normal(0.0, config.range_noise_scale))
    gps_std = abs(rng.normal(0.0, config.gps_noise_scale))
    vel_std = abs(rng.normal(0.0, config.vel_offset_scale))
    offset = float(rng.integers(0, config.pos_offset_max + 1))
    kind = config.paths[int(rng.integers(0, len(config.paths)))]
    seed = int(rng.integers(0, 2**63))
    base = config.base
    # base.r2_path carries the geometry of every kind; only the kind is drawn.
    r2 = replace(base.r2_path, kind=kind)
    r1 = base.r1_path
    if config.randomize_placement:
        r1 = _place(r1, rng)
        r2 = _place(r2, rng)
    return replace(
        base,
        r1_path=r1,
        r2_path=r2,
        range_noise_std=float(range_std),
        gps_noise_std_r1=float(gps_std),
        gps_noise_std_r2=float(gps_std),
        init_pos_offset=offset,
        init_vel_offset_std=float(vel_std),
        seed=seed,
    )


def execute_run(config: SweepConfig, run_index: int, keep_errors: bool = False) -> RunResult:
    """Sample and simulate one run; estimator failures become diverged results."""
    sc = sample_run(config, run_index)
    common = dict(
        run_index=run_index,
        seed=sc.seed,
        path=sc.r2_path.kind,
        range_noise_std=sc.range_noise_std,
        gps_noise_std=sc.gps_noise_std_r2,
        vel_offset_std=sc.init_vel_offset_std,
        pos_offset=sc.init_pos_offset,
    )
    try:
        errors = simulate(sc).errors
    except EstimationError as exc:
        return RunResult(**common, mean_error=math.nan, rms_error=math.nan, max_error=math.nan,
                         diverged=True, reason=f"{type(exc).__name__}: {exc}")
    tail = errors[sc.burn_in + 1:]
    if not np.all(np.isfinite(tail)):
        return RunResult(**common, mean_error=math.nan, rms_error=math.nan, max_error=math.nan,
                         diverged=True, reason="non-finite estimate")
    return RunResult(
        **common,
        mean_error=float(tail.mean()),
        rms_error=float(np.sqrt(np.mean(tail**2))),
        max_error=float(tail.max()),
        errors=errors.astype(np.float32) if keep_errors else None,
    )


def _run_chunk(args):
    config, indices, keep_errors = args
    return [execute_run(config, i, keep_errors) for i in indices]


def default_workers() -> int:
    env = os.environ.get("COOPSCI_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_batch(config: SweepConfig, workers: int = 1, keep_errors: bool = False, progress=None) -> list[RunResult]:
    """All runs of ``config``, ordered by run index.

    ``progress``, if given, is called with the number of finished runs.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    n = config.num_runs
    if workers == 1:
        results = []
        for i in range(n):
            results.append(execute_run(config, i, keep_errors))
            if progress and (i + 1) % 100 == 0:
                progress(i + 1)
        return results
    chunk = max(1, min(250, math.ceil(n / (4 * workers))))
    jobs = [(config, range(s, min(s + chunk, n)), keep_errors) for s in range(0, n, chunk)]
    results: list[RunResult | None] = [None] * n
    done = 0
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for (_, idx, _), part in zip(jobs, pool.map(_run_chunk, jobs)):
            for i, r in zip(idx, part):
                results[i] = r
            done += len(part)
            if progress:
                progress(done)
    return results


def sigma_bins(scale: float) -> tuple[list[float], list[str]]:
    """Half-sigma bin edges ``0, s/2, ..., 3s, inf`` with sigma-multiple labels."""
    edges = [k * scale / 2 for k in range(7)] + [math.inf]
    return edges, list(SIGMA_LABELS)


def default_binning(axis: str, config: SweepConfig):
    """``(edges, labels)`` for numeric axes or ``(None, categories)`` for categorical ones."""
    if axis == "range_noise_std":
        return sigma_bins(config.range_noise_scale)
    if axis == "gps_noise_std":
        return sigma_bins(config.gps_noise_scale)
    if axis == "vel_offset_std":
        return sigma_bins(config.vel_offset_scale)
    if axis == "pos_offset":
        return None, [str(k) for k in range(config.pos_offset_max + 1)]
    if axis == "path":
        return None, sorted(config.paths)
    raise ValueError(f"unknown axis {axis!r}; expected one of {AXES}")


def _bin_members(results, axis, bin_edges, labels):
    values = [r.param(axis) for r in results]
    groups: list[list[RunResult]] = [[] for _ in labels]
    if bin_edges is None:
        lookup = {lab: i for i, lab in enumerate(labels)}
        for r, v in zip(results, values):
            key = str(int(v)) if isinstance(v, float) and float(v).is_integer() else str(v)
            if key not in lookup:
                raise ValueError(f"value {v!r} on axis {axis} matches no category")
            groups[lookup[key]].append(r)
        return groups
    if len(bin_edges) != len(labels) + 1:
        raise ValueError("need one more bin edge than labels")
    edges = np.asarray(bin_edges, dtype=float)
    for r, v in zip(results, values):
        i = int(np.searchsorted(edges, v, side="right")) - 1
        if not 0 <= i < len(labels):
            raise ValueError(f"value {v} on axis {axis} is outside the bin edges")
        groups[i].append(r)
    return groups


def bin_and_summarize(
    results: Sequence[RunResult],
    axis: str,
    bin_edges: Sequence[float] | None = None,
    labels: Sequence[str] | None = None,
    per_bin_threshold: bool = False,
    config: SweepConfig | None = None,
) -> list[BinSummary]:
    """Per-bin statistics of the run mean errors along ``axis``.

    Numeric bins are half-open ``[lo, hi)``.  With ``bin_edges=None`` and no
    labels the axis defaults of ``config`` (or of a default sweep) apply.  A run counts as
    divergent when its error exceeds ``mean + 3 std`` of all finite runs (or of
    its own bin with ``per_bin_threshold``); failed runs always count.
    """
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}; expected one of {AXES}")
    if labels is None:
        if bin_edges is not None:
            labels = [f"{lo:g}" for lo in bin_edges[:-1]]
        else:
            bin_edges, labels = default_binning(axis, config or SweepConfig(num_runs=1))
    groups = _bin_members(results, axis, bin_edges, list(labels))

    finite = np.array([r.mean_error for r in results if np.isfinite(r.mean_error)])
    global_cut = finite.mean() + 3 * finite.std() if finite.size else math.inf
    out = []
    for label, members in zip(labels, groups):
        if not members:
            out.append(BinSummary(label, 0))
            continue
        err = np.array([r.mean_error for r in members if np.isfinite(r.mean_error)])
        failed = sum(1 for r in members if not np.isfinite(r.mean_error))
        if err.size == 0:
            out.append(BinSummary(label, len(members), divergence_pct=100.0))
            continue
        cut = err.mean() + 3 * err.std() if per_bin_threshold else global_cut
        diverged = int(np.sum(err > cut)) + failed
        out.append(BinSummary(
            label=label,
            num_runs=len(members),
            mean=float(err.mean()),
            std=float(err.std()),
            median=float(np.median(err)),
            max=float(err.max()),
            min=float(err.min()),
            divergence_pct=100.0 * diverged / len(members),
        ))
    return out


def _fmt(v) -> str:
    return "" if v is None else f"{v:.2f}"


def export_summary(summaries: Sequence[BinSummary], path) -> Path:
    """Write summaries as CSV with two-decimal values (blank for empty bins)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            w.writerow([s.label, s.num_runs, _fmt(s.mean), _fmt(s.std), _fmt(s.median), _fmt(s.max),
                        _fmt(s.min), _fmt(s.divergence_pct)])
    return path


def read_summary(path) -> list[BinSummary]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    def num(v):
        return None if v == "" else float(v)
    return [
        BinSummary(r["bin"], int(r["num_runs"]), num(r["mean_m"]), num(r["std_m"]), num(r["median_m"]),
                   num(r["max_m"]), num(r["min_m"]), num(r["divergence_pct"]))
        for r in rows
    ]


RUN_COLUMNS = ("run_index", "seed", "path", "range_noise_std", "gps_noise_std", "vel_offset_std", "pos_offset",
               "mean_error", "rms_error", "max_error", "diverged", "reason")


def export_runs(results: Sequence[RunResult], path) -> Path:
    """Per-run parameters and error statistics, full precision."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for r in results:
            w.writerow([repr(v) if isinstance(v, float) else int(v) if isinstance(v, bool) else v
                        for v in r.key()])
    return path


def round_summary(s: BinSummary, digits: int = 2) -> BinSummary:
    def r(v):
        return None if v is None else round(v, digits)
    return BinSummary(s.label, s.num_runs, r(s.mean), r(s.std), r(s.median), r(s.max), r(s.min),
                      r(s.divergence_pct))
