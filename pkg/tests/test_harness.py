import math

import numpy as np
import pytest

from coinflips.devices import load_device
from coinflips.evo import EvoConfig, FitnessWeights, evolve
from coinflips.harness import (
    BASE_WEIGHTS,
    DEFAULT_SAMPLE_SIZES,
    RUNS_COLUMNS,
    SWEEP_COLUMNS,
    WEIGHT_SWEEP_COLUMNS,
    SweepConfig,
    best_per_setting,
    default_weight_grids,
    run_repeated_optimizations,
    run_sample_sweep,
    run_sweep_cell,
    run_weight_sweep,
    runs_csv,
    spearman,
    weight_sweep_csv,
)
from coinflips.prob import DIE_TARGET, PUBLISHED_PARAMS, CircuitParams
from coinflips.rng import EXP_REPEATED_RUNS, EXP_WEIGHT_SWEEP, derive_seed

from oracles import td_sample_energy_moments

TD = load_device("td")
SHE = load_device("mtj_she")


def sweep_config(**kw):
    base = dict(device=TD, params=PUBLISHED_PARAMS["td"], target=DIE_TARGET, master_seed=7)
    base.update(kw)
    return SweepConfig(**base)


class TestSweepConfig:
    @pytest.mark.parametrize("sizes", [(), (10, 10), (50, 10), (0, 5)])
    def test_bad_sizes(self, sizes):
        with pytest.raises(ValueError):
            sweep_config(sample_sizes=sizes)

    def test_bad_trials(self):
        with pytest.raises(ValueError):
            sweep_config(trials_per_size=0)

    def test_published_defaults(self):
        cfg = sweep_config()
        assert cfg.sample_sizes == (10, 50, 100, 200, 500, 1000, 1500, 2000)
        assert cfg.trials_per_size == 10


class TestSampleSweep:
    def test_kl_decreases(self):
        res = run_sample_sweep(sweep_config(sample_sizes=(10, 2000)))
        kl = res.mean_kl()
        assert kl[2000] < kl[10]

    def test_deterministic_circuit(self):
        cfg = sweep_config(params=CircuitParams(1.0, 1.0, 1.0, 0.5, 0.5), sample_sizes=(100,),
                           trials_per_size=1)
        (row,) = run_sample_sweep(cfg).rows
        assert row.counts == (100, 0, 0, 0)
        assert row.kl_nats == pytest.approx(math.log(2))
        assert row.total_energy_fj == 150.0 * 100

    def test_energy_linear_in_n(self):
        prm = PUBLISHED_PARAMS["td"]
        res = run_sample_sweep(sweep_config())
        mean, var = td_sample_energy_moments(*prm.as_tuple())
        energy = res.mean_energy()
        # The 10-trial mean at size n has variance n * var / 10.
        diff_sd = math.sqrt(2000 * var / 10 + 200 ** 2 * (10 * var / 10))
        assert abs(energy[2000] - 200 * energy[10]) <= 3 * diff_sd
        for n, rows in res.by_size().items():
            per_sample = np.mean([r.total_energy_fj / n for r in rows])
            assert abs(per_sample - mean) <= 3 * math.sqrt(var / (n * len(rows)))

    def test_rows_and_counts(self):
        res = run_sample_sweep(sweep_config(trials_per_size=3))
        assert len(res.rows) == len(DEFAULT_SAMPLE_SIZES) * 3
        assert [(r.sample_size, r.trial) for r in res.rows] == \
            [(n, t) for n in DEFAULT_SAMPLE_SIZES for t in range(3)]
        assert all(sum(r.counts) == r.sample_size for r in res.rows)

    def test_cell_replay(self):
        cfg = sweep_config(trials_per_size=4)
        res = run_sample_sweep(cfg)
        row = res.rows[13]
        assert run_sweep_cell(cfg, row.sample_size, row.trial, row.substream_seed) == row

    def test_thread_count_irrelevant(self):
        cfg = sweep_config()
        assert run_sample_sweep(cfg, threads=1).to_csv() == run_sample_sweep(cfg, threads=4).to_csv()

    def test_adding_sizes_keeps_existing_cells(self):
        a = run_sample_sweep(sweep_config(sample_sizes=(10, 50)))
        b = run_sample_sweep(sweep_config(sample_sizes=(10, 50, 100), trials_per_size=12))
        old = {(r.sample_size, r.trial): r for r in a.rows}
        new = {(r.sample_size, r.trial): r for r in b.rows}
        assert all(new[k] == v for k, v in old.items())

    def test_csv_header(self):
        text = run_sample_sweep(sweep_config(sample_sizes=(10,), trials_per_size=1)).to_csv()
        assert text.splitlines()[0] == ",".join(SWEEP_COLUMNS)
        assert text.splitlines()[1].startswith("td,10,0,")


class TestWeightSweep:
    def test_default_grids(self):
        grids = default_weight_grids()
        assert len(grids["omega1"]) == 7
        assert grids["omega1"][0] == pytest.approx(75.0)
        assert grids["omega1"][3] == pytest.approx(7500.0)
        assert grids["omega3"][-1] == pytest.approx(50.0)

    def test_single_base_point_matches_evolve(self):
        cfg = EvoConfig(population_size=20, generations=40, seed=3)
        rows = run_weight_sweep({"omega1": [7500.0]}, TD, cfg, DIE_TARGET, reps=1)
        assert len(rows) == 1
        seed = derive_seed(3, EXP_WEIGHT_SWEEP, 0, 0, 0)
        res = evolve(EvoConfig(population_size=20, generations=40, seed=seed), TD, BASE_WEIGHTS, DIE_TARGET)
        assert rows[0].weights == BASE_WEIGHTS
        assert (rows[0].best_kl, rows[0].best_energy) == (res.exact_kl, res.exact_energy)

    def test_rejects_bad_input(self):
        cfg = EvoConfig(population_size=4, generations=1)
        with pytest.raises(ValueError):
            run_weight_sweep({"omega9": [1.0]}, TD, cfg, DIE_TARGET)
        with pytest.raises(ValueError):
            run_weight_sweep({"omega1": []}, TD, cfg, DIE_TARGET)

    @pytest.mark.parametrize("omega,index,metric,", [
        ("omega1", 0, "best_kl"),
        ("omega3", 2, "best_energy"),
    ])
    def test_tradeoff_trend(self, omega, index, metric):
        grid = default_weight_grids(points=5)[omega]
        votes = []
        for seed in range(3):
            cfg = EvoConfig(generations=300, seed=seed)
            rows = best_per_setting(run_weight_sweep({omega: grid}, SHE, cfg, DIE_TARGET, reps=2))
            xs = [r.weights.as_tuple()[index] for r in rows]
            votes.append(spearman(xs, [getattr(r, metric) for r in rows]) <= 0)
        assert sum(votes) >= 2

    def test_csv(self):
        cfg = EvoConfig(population_size=6, generations=2, seed=1)
        rows = run_weight_sweep({"omega2": [0.001, 0.01]}, TD, cfg, DIE_TARGET, reps=2)
        lines = weight_sweep_csv(rows).splitlines()
        assert lines[0] == ",".join(WEIGHT_SWEEP_COLUMNS)
        assert len(lines) == 5 and lines[1].startswith("omega2,7500.0,0.001,0.5,0,")
        assert len(best_per_setting(rows)) == 2


class TestRepeatedRuns:
    def test_single_run_matches_evolve(self):
        cfg = EvoConfig(population_size=20, generations=30, seed=42)
        (row,) = run_repeated_optimizations(1, TD, cfg, BASE_WEIGHTS, DIE_TARGET)
        assert row.seed == derive_seed(42, EXP_REPEATED_RUNS, 0)
        res = evolve(EvoConfig(population_size=20, generations=30, seed=row.seed), TD, BASE_WEIGHTS, DIE_TARGET)
        assert np.array_equal(row.result.best_genome, res.best_genome)

    def test_twenty_td_runs(self):
        rows = run_repeated_optimizations(20, TD, EvoConfig(seed=2023), BASE_WEIGHTS, DIE_TARGET)
        assert len(rows) == 20
        assert sum(r.result.exact_kl <= 0.01 for r in rows) >= 16
        text = runs_csv(rows)
        assert text.splitlines()[0] == ",".join(RUNS_COLUMNS)
        assert len(text.splitlines()) == 21

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            run_repeated_optimizations(0, TD, EvoConfig(), BASE_WEIGHTS, DIE_TARGET)

    def test_thread_count_irrelevant(self):
        cfg = EvoConfig(population_size=10, generations=20, seed=8)
        a = runs_csv(run_repeated_optimizations(4, SHE, cfg, BASE_WEIGHTS, DIE_TARGET, threads=1))
        b = runs_csv(run_repeated_optimizations(4, SHE, cfg, BASE_WEIGHTS, DIE_TARGET, threads=3))
        assert a == b


def test_spearman():
    assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert spearman([1, 2, 3], [1, 1, 1]) is None
    assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)
