import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coinflips.devices import (
    DeviceConfigError,
    DeviceSpec,
    expected_energy_per_flip,
    flip,
    generate_bitstream,
    load_device,
    load_device_config,
)
from coinflips.rng import derive_seed, make_rng

TD = load_device("td")
SHE = load_device("mtj_she")
VCMA = load_device("mtj_vcma")


class TestExpectedEnergy:
    @pytest.mark.parametrize("p,expected", [(1.0, 50.0), (0.0, 20.0), (0.5, 35.0)])
    def test_td(self, p, expected):
        assert expected_energy_per_flip(TD, p) == expected

    def test_she_fair_coin(self):
        assert expected_energy_per_flip(SHE, 0.5) == 1.0

    def test_she_full_bias(self):
        assert expected_energy_per_flip(SHE, 1.0) == 10.0
        assert expected_energy_per_flip(SHE, 0.0) == 10.0

    def test_vcma_constant(self):
        assert expected_energy_per_flip(VCMA, 0.1) == expected_energy_per_flip(VCMA, 0.9) == 1000.0

    def test_she_orders_of_magnitude_below_vcma(self):
        ps = np.linspace(0, 1, 101)
        assert np.all(expected_energy_per_flip(SHE, ps) * 100 <= expected_energy_per_flip(VCMA, ps))

    def test_array_input(self):
        out = expected_energy_per_flip(TD, np.array([0.0, 0.5, 1.0]))
        assert out.tolist() == [20.0, 35.0, 50.0]

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_td_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert expected_energy_per_flip(TD, lo) <= expected_energy_per_flip(TD, hi)

    @given(st.floats(0, 1))
    def test_she_symmetric(self, p):
        assert expected_energy_per_flip(SHE, p) == pytest.approx(expected_energy_per_flip(SHE, 1 - p), abs=1e-12)


class TestFlip:
    def test_deterministic_heads(self):
        rng = make_rng(1)
        assert all(flip(TD, 1.0, rng) == (flip(TD, 1.0, rng)) for _ in range(100))
        rec = flip(TD, 1.0, rng)
        assert (rec.face, rec.energy) == (1, 50.0)

    def test_deterministic_tails(self):
        rng = make_rng(2)
        recs = [flip(TD, 0.0, rng) for _ in range(100)]
        assert {(r.face, r.energy) for r in recs} == {(0, 20.0)}

    def test_bias_cost_paid_regardless_of_outcome(self):
        rng = make_rng(3)
        recs = [flip(SHE, 0.8, rng) for _ in range(200)]
        assert {r.face for r in recs} == {0, 1}
        energies = {r.energy for r in recs}
        assert len(energies) == 1 and energies.pop() == pytest.approx(1.0 + 9.0 * 0.6 ** 2)

    def test_rejects_bad_probability(self):
        with pytest.raises(ValueError):
            flip(TD, 1.5, make_rng(0))

    def test_fair_statistics(self):
        bits, energy = generate_bitstream(TD, 0.5, 10**6, make_rng(11))
        assert abs(bits.mean() - 0.5) <= 0.002
        assert abs(energy / 10**6 - 35.0) <= 0.05

    def test_stream_equals_sequential_flips(self):
        a = make_rng(7)
        seq = [flip(TD, 0.3, a) for _ in range(50)]
        bits, energy = generate_bitstream(TD, 0.3, 50, make_rng(7))
        assert bits.tolist() == [r.face for r in seq]
        assert energy == math.fsum(r.energy for r in seq)


class TestBitstream:
    def test_all_heads(self):
        bits, energy = generate_bitstream(TD, 1.0, 4, make_rng(0))
        assert bits.tolist() == [1, 1, 1, 1] and energy == 200.0

    def test_all_tails(self):
        bits, energy = generate_bitstream(TD, 0.0, 4, make_rng(0))
        assert bits.tolist() == [0, 0, 0, 0] and energy == 80.0

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            generate_bitstream(TD, 0.5, 0, make_rng(0))

    def test_binomial_bound_and_energy_identity(self):
        n = 10**5
        bits, energy = generate_bitstream(TD, 0.3, n, make_rng(12345))
        heads = int(bits.sum())
        assert abs(heads - 30000) <= 435
        assert energy == 20.0 * n + 30.0 * heads

    @pytest.mark.parametrize("p", [0.05, 0.3, 0.5, 0.77, 0.99])
    def test_heads_frequency_band(self, p):
        # 3-sigma band; each case is a fixed seed, so the ~0.27% false-failure
        # rate applies only when seeds change.
        n = 20000
        bits, _ = generate_bitstream(TD, p, n, make_rng(derive_seed(99, int(p * 100))))
        assert abs(bits.mean() - p) <= 3 * math.sqrt(p * (1 - p) / n)

    def test_energy_mean_within_3_sigma(self):
        n, p = 10**5, 0.62
        _, energy = generate_bitstream(TD, p, n, make_rng(4))
        sigma = 30.0 * math.sqrt(p * (1 - p) / n)
        assert abs(energy / n - expected_energy_per_flip(TD, p)) <= 3 * sigma

    def test_seed_reproducible(self):
        a = generate_bitstream(SHE, 0.4, 1000, make_rng(5))
        b = generate_bitstream(SHE, 0.4, 1000, make_rng(5))
        assert a[0].tobytes() == b[0].tobytes() and a[1] == b[1]


class TestConfig:
    def test_shipped_td(self):
        assert TD.model == "linear_heads_tails"
        assert TD["energy_heads_fj"] == 50.0 and TD["energy_tails_fj"] == 20.0

    def test_vcma_document(self):
        spec = load_device_config('{"name": "mtj_vcma", "model": "constant", "e0_fj": 1000}')
        assert spec == VCMA

    def test_negative_energy_rejected(self):
        doc = {"name": "bad", "model": "linear_heads_tails", "energy_heads_fj": -1, "energy_tails_fj": 20}
        with pytest.raises(DeviceConfigError):
            load_device_config(doc)

    @pytest.mark.parametrize("doc", [
        "{not json",
        '["a list"]',
        '{"name": "x", "model": "quadratic", "e0_fj": 1}',
        '{"name": "x", "model": "constant"}',
        '{"name": "x", "model": "constant", "e0_fj": 1, "gamma": 2}',
        '{"name": "x", "model": "constant", "e0_fj": "lots"}',
        '{"model": "constant", "e0_fj": 1}',
        '{"name": "x", "model": "base_plus_bias", "e0_fj": 1, "e_bias_fj": 1, "gamma": 0}',
    ])
    def test_rejections(self, doc):
        with pytest.raises(DeviceConfigError):
            load_device_config(doc)

    def test_path_and_unknown(self, tmp_path):
        path = tmp_path / "dev.json"
        path.write_text(json.dumps(SHE.to_dict()))
        assert load_device(str(path)) == SHE
        with pytest.raises(DeviceConfigError):
            load_device("no_such_device")

    def test_create(self):
        assert DeviceSpec.create("td", "linear_heads_tails", energy_heads_fj=50, energy_tails_fj=20) == TD
