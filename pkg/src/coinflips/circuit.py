"""Monte Carlo simulation of hidden-dependence coin circuits on a device."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .devices import DeviceSpec, expected_energy_per_flip, flip_energy
from .prob import CircuitParams, Distribution4, kl_divergence


@dataclass(frozen=True)
class HiddenDependenceCircuit:
    params: CircuitParams
    device: DeviceSpec
    count_hidden_energy: bool = True


@dataclass(frozen=True)
class EmpiricalDistribution:
    counts: tuple
    total: int
    total_energy: float

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != 4 or any(c < 0 for c in counts):
            raise ValueError(f"counts must be 4 non-negative integers, got {self.counts}")
        if sum(counts) != self.total:
            raise ValueError(f"counts {counts} do not sum to total {self.total}")
        if self.total_energy < 0:
            raise ValueError("total_energy must be non-negative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total", int(self.total))
        object.__setattr__(self, "total_energy", float(self.total_energy))

    def __add__(self, other: "EmpiricalDistribution") -> "EmpiricalDistribution":
        return EmpiricalDistribution(
            tuple(a + b for a, b in zip(self.counts, other.counts)),
            self.total + other.total,
            self.total_energy + other.total_energy,
        )

    @property
    def frequencies(self) -> tuple:
        if self.total == 0:
            raise ValueError("empty empirical distribution")
        return tuple(c / self.total for c in self.counts)

    @property
    def mean_energy(self) -> float:
        return self.total_energy / self.total


def _outcomes(u: np.ndarray, params: CircuitParams):
    """Map uniform triples (hidden, coin 1, coin 2) to outcomes and flip faces."""
    hidden = u[..., 0] < params.w
    p = np.where(hidden, params.p1, params.p2)
    q = np.where(hidden, params.q1, params.q2)
    c1 = u[..., 1] < p
    c2 = u[..., 2] < q
    outcome = 2 * (~c1) + (~c2)
    return outcome, hidden, (p, c1), (q, c2)


def _flip_energies(circuit: HiddenDependenceCircuit, hidden, coin1, coin2) -> np.ndarray:
    dev = circuit.device
    parts = [flip_energy(dev, coin1[0], coin1[1]), flip_energy(dev, coin2[0], coin2[1])]
    if circuit.count_hidden_energy:
        parts.insert(0, flip_energy(dev, circuit.params.w, hidden))
    return np.stack(parts, axis=-1)


def sample_once(circuit: HiddenDependenceCircuit, rng: np.random.Generator):
    """Draw one die roll; returns ``(outcome, energy_fj)``.

    Three uniforms are consumed in the order hidden coin, coin 1, coin 2.
    """
    u = np.array([rng.random(), rng.random(), rng.random()])
    outcome, hidden, coin1, coin2 = _outcomes(u, circuit.params)
    energy = math.fsum(_flip_energies(circuit, hidden, coin1, coin2))
    return int(outcome), energy


def sample_n(circuit: HiddenDependenceCircuit, n: int, rng: np.random.Generator) -> EmpiricalDistribution:
    """Aggregate ``n`` draws; consumes ``rng`` exactly as ``n`` calls to :func:`sample_once`."""
    if n < 1:
        raise ValueError("n must be at least 1")
    u = rng.random((n, 3))
    outcome, hidden, coin1, coin2 = _outcomes(u, circuit.params)
    counts = np.bincount(outcome, minlength=4)
    energy = math.fsum(_flip_energies(circuit, hidden, coin1, coin2).ravel())
    return EmpiricalDistribution(tuple(counts.tolist()), n, energy)


def empirical_kl(emp: EmpiricalDistribution, target: Distribution4) -> float:
    return kl_divergence(emp.frequencies, target.probs)


def expected_energy_per_sample(circuit: HiddenDependenceCircuit) -> float:
    prm = circuit.params
    e = lambda x: float(expected_energy_per_flip(circuit.device, x))  # noqa: E731
    total = prm.w * (e(prm.p1) + e(prm.q1)) + (1.0 - prm.w) * (e(prm.p2) + e(prm.q2))
    if circuit.count_hidden_energy:
        total += e(prm.w)
    return total
