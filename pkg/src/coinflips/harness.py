"""Experiment orchestration: sample-size sweeps, objective-weight sweeps and
repeated optimization runs, each writing a CSV table.

All randomness is drawn from substreams derived from a master seed
(see :mod:`coinflips.rng`), so every table row can be recomputed on its own
and results do not depend on the number of worker threads.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .circuit import HiddenDependenceCircuit, empirical_kl, sample_n
from .devices import DeviceSpec
from .evo import EvoConfig, FitnessWeights, OptimizationResult, evolve
from .prob import GENE_NAMES, CircuitParams, Distribution4
from .rng import (
    EXP_REPEATED_RUNS,
    EXP_SAMPLE_SWEEP,
    EXP_WEIGHT_SWEEP,
    derive_seed,
    make_rng,
)

DEFAULT_SAMPLE_SIZES = (10, 50, 100, 200, 500, 1000, 1500, 2000)
BASE_WEIGHTS = FitnessWeights(7500.0, 0.005, 0.5)
OMEGA_NAMES = ("omega1", "omega2", "omega3")

SWEEP_COLUMNS = ("device", "sample_size", "trial", "substream_seed", "kl_nats",
                 "total_energy_fj", "count0", "count1", "count2", "count3")
WEIGHT_SWEEP_COLUMNS = ("varied_omega", "omega1", "omega2", "omega3", "rep",
                        "best_kl_nats", "best_energy_fj")
RUNS_COLUMNS = ("device", "run", "seed") + GENE_NAMES + ("kl_nats", "energy_fj", "fitness")


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    """Ordered map, optionally over a thread pool."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _to_csv(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


# -- sample-size sweep -------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    device: DeviceSpec
    params: CircuitParams
    target: Distribution4
    sample_sizes: tuple = DEFAULT_SAMPLE_SIZES
    trials_per_size: int = 10
    master_seed: int = 0
    count_hidden_energy: bool = True

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sample_sizes)
        if not sizes:
            raise ValueError("sample_sizes must be non-empty")
        if any(s < 1 for s in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"sample_sizes must be positive and strictly increasing: {sizes}")
        if self.trials_per_size < 1:
            raise ValueError("trials_per_size must be at least 1")
        if not self.target.is_strictly_positive():
            raise ValueError("target must be strictly positive")
        object.__setattr__(self, "sample_sizes", sizes)


@dataclass(frozen=True)
class SweepRow:
    device: str
    sample_size: int
    trial: int
    substream_seed: int
    kl_nats: float
    total_energy_fj: float
    counts: tuple

    def as_row(self) -> list:
        return [self.device, self.sample_size, self.trial, self.substream_seed,
                self.kl_nats, self.total_energy_fj, *self.counts]


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        return _to_csv(SWEEP_COLUMNS, [r.as_row() for r in self.rows])

    def by_size(self) -> dict:
        out = {}
        for r in self.rows:
            out.setdefault(r.sample_size, []).append(r)
        return out

    def mean_kl(self) -> dict:
        return {n: float(np.mean([r.kl_nats for r in rs])) for n, rs in self.by_size().items()}

    def mean_energy(self) -> dict:
        return {n: float(np.mean([r.total_energy_fj for r in rs])) for n, rs in self.by_size().items()}


def run_sweep_cell(config: SweepConfig, size: int, trial: int, seed: int) -> SweepRow:
    """Recompute one (size, trial) cell from its substream seed."""
    circuit = HiddenDependenceCircuit(config.params, config.device, config.count_hidden_energy)
    emp = sample_n(circuit, size, make_rng(seed))
    return SweepRow(config.device.name, size, trial, seed,
                    empirical_kl(emp, config.target), emp.total_energy, emp.counts)


def run_sample_sweep(config: SweepConfig, threads: int = 1) -> SweepResult:
    cells = [(size, trial, derive_seed(config.master_seed, EXP_SAMPLE_SWEEP, si, trial))
             for si, size in enumerate(config.sample_sizes)
             for trial in range(config.trials_per_size)]
    rows = _map(lambda c: run_sweep_cell(config, *c), cells, threads)
    return SweepResult(rows)


# -- objective-weight sweep ----------------------------------------------------

def default_weight_grids(base: FitnessWeights = BASE_WEIGHTS, points: int = 7) -> dict:
    """Log-spaced grids from base/100 to base*100, one per objective weight."""
    return {name: [float(x) for x in np.logspace(math.log10(b / 100), math.log10(b * 100), points)]
            for name, b in zip(OMEGA_NAMES, base.as_tuple())}


@dataclass(frozen=True)
class WeightSweepRow:
    varied_omega: str
    weights: FitnessWeights
    rep: int
    seed: int
    best_kl: float
    best_energy: float

    def as_row(self) -> list:
        return [self.varied_omega, *self.weights.as_tuple(), self.rep, self.best_kl, self.best_energy]


def run_weight_sweep(weight_grids: Mapping[str, Sequence[float]], device: DeviceSpec,
                     evo_config: EvoConfig, target: Distribution4,
                     base: FitnessWeights = BASE_WEIGHTS, reps: int = 3,
                     threads: int = 1) -> list:
    """Vary one objective weight at a time around ``base``.

    ``weight_grids`` maps ``omega1``/``omega2``/``omega3`` to grid values;
    omitted names are not swept.  Each (omega, grid point, rep) cell runs
    :func:`evolve` with a seed derived from ``evo_config.seed``.
    """
    unknown = set(weight_grids) - set(OMEGA_NAMES)
    if unknown:
        raise ValueError(f"unknown objective weights {sorted(unknown)}")
    if reps < 1:
        raise ValueError("reps must be at least 1")
    cells = []
    for oi, name in enumerate(OMEGA_NAMES):
        grid = weight_grids.get(name)
        if grid is None:
            continue
        if len(grid) == 0:
            raise ValueError(f"grid for {name} is empty")
        for gi, value in enumerate(grid):
            weights = replace(base, **{f"w{oi + 1}": value})
            for rep in range(reps):
                seed = derive_seed(evo_config.seed, EXP_WEIGHT_SWEEP, oi, gi, rep)
                cells.append((name, weights, rep, seed))

    def run(cell):
        name, weights, rep, seed = cell
        res = evolve(replace(evo_config, seed=seed), device, weights, target)
        return WeightSweepRow(name, weights, rep, seed, res.exact_kl, res.exact_energy)

    return _map(run, cells, threads)


def best_per_setting(rows: Sequence[WeightSweepRow]) -> list:
    """Collapse reps to the lowest-KL row per (varied omega, weights)."""
    best = {}
    for r in rows:
        key = (r.varied_omega, r.weights)
        if key not in best or r.best_kl < best[key].best_kl:
            best[key] = r
    return list(best.values())


def weight_sweep_csv(rows: Sequence[WeightSweepRow]) -> str:
    return _to_csv(WEIGHT_SWEEP_COLUMNS, [r.as_row() for r in rows])


# -- repeated optimizations ------------------------------------------------------

@dataclass(frozen=True)
class RunRow:
    device: str
    run: int
    seed: int
    result: OptimizationResult

    def as_row(self) -> list:
        return [self.device, self.run, self.seed, *(float(x) for x in self.result.best_genome),
                self.result.exact_kl, self.result.exact_energy, self.result.best_fitness]


def run_repeated_optimizations(n_runs: int, device: DeviceSpec, evo_config: EvoConfig,
                               weights: FitnessWeights, target: Distribution4,
                               threads: int = 1) -> list:
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    seeds = [derive_seed(evo_config.seed, EXP_REPEATED_RUNS, run) for run in range(n_runs)]
    results = _map(lambda s: evolve(replace(evo_config, seed=s), device, weights, target),
                   seeds, threads)
    return [RunRow(device.name, i, s, r) for i, (s, r) in enumerate(zip(seeds, results))]


def runs_csv(rows: Sequence[RunRow]) -> str:
    return _to_csv(RUNS_COLUMNS, [r.as_row() for r in rows])


def spearman(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Spearman rank correlation (average ranks for ties); None if undefined."""
    def ranks(a):
        a = np.asarray(a, dtype=float)
        order = np.argsort(a, kind="stable")
        r = np.empty(len(a))
        r[order] = np.arange(len(a), dtype=float)
        for v in np.unique(a):
            tie = a == v
            r[tie] = r[tie].mean()
        return r
    rx, ry = ranks(x), ranks(y)
    if rx.std() == 0 or ry.std() == 0:
        return None
    return float(np.corrcoef(rx, ry)[0, 1])
