"""Real-valued evolutionary optimizer over the five circuit probabilities.

Genomes are float arrays ``(w, p1, q1, p2, q2)`` in ``[0, 1]``.  Fitness is
minimized and combines three weighted objectives computed exactly (no
sampling): KL divergence of the circuit's outcome distribution from the
target, distance of the four set coins from fairness, and the summed
expected flip energy of those four coins in femtojoules.  The selector
coin ``w`` contributes to neither the fairness nor the energy term.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .devices import DeviceSpec, expected_energy_per_flip
from .prob import (
    GENE_NAMES,
    CircuitParams,
    Distribution4,
    fairness_rows,
    kl_rows,
    outcome_probs,
)
from .rng import make_rng

N_GENES = 5


@dataclass(frozen=True)
class FitnessWeights:
    w1: float = 7500.0  # KL divergence
    w2: float = 0.005  # fairness
    w3: float = 0.5  # energy

    def __post_init__(self):
        for name in ("w1", "w2", "w3"):
            value = float(getattr(self, name))
            if not value >= 0:
                raise ValueError(f"objective weight {name} must be non-negative, got {value!r}")
            object.__setattr__(self, name, value)

    def as_tuple(self) -> tuple:
        return (self.w1, self.w2, self.w3)


@dataclass(frozen=True)
class EvoConfig:
    population_size: int = 100
    generations: int = 1000
    tournament_size: int = 2
    crossover_probability: float = 0.9
    per_gene_mutation_rate: float = 1.0 / N_GENES
    mutation_sigma: float = 0.001
    elitism_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if self.generations < 1:
            raise ValueError("generations must be at least 1")
        if not 1 <= self.tournament_size <= self.population_size:
            raise ValueError("tournament_size must be in [1, population_size]")
        for name in ("crossover_probability", "per_gene_mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not self.mutation_sigma > 0:
            raise ValueError("mutation_sigma must be positive")
        if not 0 <= self.elitism_count < self.population_size:
            raise ValueError("elitism_count must be in [0, population_size)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FitnessTerms:
    kl: np.ndarray
    fairness: np.ndarray
    energy: np.ndarray
    total: np.ndarray


def energy_rows(genes: np.ndarray, device: DeviceSpec) -> np.ndarray:
    """Summed expected flip energy of the four set coins, per genome."""
    g = np.asarray(genes, dtype=float)
    return expected_energy_per_flip(device, g[..., 1:]).sum(axis=-1)


def evaluate_population(genes: np.ndarray, device: DeviceSpec, weights: FitnessWeights,
                        target: Distribution4) -> FitnessTerms:
    genes = np.atleast_2d(np.asarray(genes, dtype=float))
    kl = kl_rows(outcome_probs(genes), target)
    fair = fairness_rows(genes)
    en = energy_rows(genes, device)
    total = weights.w1 * kl + weights.w2 * fair + weights.w3 * en
    return FitnessTerms(kl, fair, en, total)


def fitness(genome, device: DeviceSpec, weights: FitnessWeights, target: Distribution4) -> float:
    """Weighted fitness of one genome (lower is better)."""
    if isinstance(genome, CircuitParams):
        genome = genome.as_array()
    return float(evaluate_population(genome, device, weights, target).total[0])


# -- operators ---------------------------------------------------------------

def tournament_select(population, k: int, rng: np.random.Generator):
    """Pick the fittest of ``k`` members drawn uniformly with replacement.

    ``population`` is a sequence of ``(genome, fitness)`` pairs.  Ties go
    to the earliest draw.
    """
    if not population:
        raise ValueError("empty population")
    if k < 1:
        raise ValueError("tournament size must be at least 1")
    drawn = rng.integers(0, len(population), size=k)
    best = min(drawn, key=lambda i: population[i][1])
    return population[best][0]


def uniform_crossover(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    mask = rng.random(len(a)) < 0.5
    return np.where(mask, a, b)


def gaussian_mutate(g: np.ndarray, sigma: float, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Add N(0, sigma) noise to each gene with probability ``rate``, then clamp."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must be in [0, 1]")
    g = np.asarray(g, dtype=float)
    hit = rng.random(g.shape) < rate
    noise = rng.normal(0.0, sigma, size=g.shape)
    return np.clip(np.where(hit, g + noise, g), 0.0, 1.0)


def _breed(pop: np.ndarray, fit: np.ndarray, n_children: int, config: EvoConfig,
           rng: np.random.Generator) -> np.ndarray:
    """Batched tournament -> uniform crossover / clone -> Gaussian mutation.

    Same operator semantics as the single-genome functions above, with all
    draws for a generation taken as arrays.
    """
    n = len(pop)
    k = config.tournament_size
    draws = rng.integers(0, n, size=(n_children, 2, k))
    winners = np.take_along_axis(draws, np.argmin(fit[draws], axis=-1)[..., None], axis=-1)[..., 0]
    mum, dad = pop[winners[:, 0]], pop[winners[:, 1]]
    do_cross = rng.random(n_children) < config.crossover_probability
    take_mum = rng.random((n_children, N_GENES)) < 0.5
    children = np.where(do_cross[:, None] & ~take_mum, dad, mum)
    hit = rng.random((n_children, N_GENES)) < config.per_gene_mutation_rate
    noise = rng.normal(0.0, config.mutation_sigma, size=(n_children, N_GENES))
    return np.clip(np.where(hit, children + noise, children), 0.0, 1.0)


# -- driver ------------------------------------------------------------------

@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_fitness: float
    best_kl: float
    best_fairness: float
    best_energy: float
    best_genome: tuple


@dataclass
class OptimizationResult:
    best_genome: np.ndarray
    best_fitness: float
    exact_kl: float
    exact_energy: float
    best_fairness: float
    history: list = field(default_factory=list)

    @property
    def best_params(self) -> CircuitParams:
        return CircuitParams.from_genes(self.best_genome)


def evolve(config: EvoConfig, device: DeviceSpec, weights: FitnessWeights,
           target: Distribution4) -> OptimizationResult:
    """Run the generational EA and return the best genome ever evaluated.

    The initial population is drawn uniformly from ``[0, 1]^5``; then
    ``config.generations`` breeding steps follow, each keeping the
    ``elitism_count`` best unchanged.  ``history[g-1]`` describes the
    population after breeding step ``g``.
    """
    if not target.is_strictly_positive():
        raise ValueError("target must be strictly positive")
    rng = make_rng(config.seed)
    n = config.population_size
    pop = rng.random((n, N_GENES))
    terms = evaluate_population(pop, device, weights, target)

    i0 = int(np.argmin(terms.total))
    best = (float(terms.total[i0]), pop[i0].copy(), float(terms.kl[i0]),
            float(terms.fairness[i0]), float(terms.energy[i0]))
    history = []
    for gen in range(1, config.generations + 1):
        order = np.argsort(terms.total, kind="stable")
        elites = pop[order[:config.elitism_count]]
        children = _breed(pop, terms.total, n - config.elitism_count, config, rng)
        pop = np.concatenate([elites, children])
        terms = evaluate_population(pop, device, weights, target)

        i = int(np.argmin(terms.total))
        history.append(GenerationRecord(
            gen, float(terms.total[i]), float(terms.kl[i]), float(terms.fairness[i]),
            float(terms.energy[i]), tuple(float(x) for x in pop[i])))
        if terms.total[i] < best[0]:
            best = (float(terms.total[i]), pop[i].copy(), float(terms.kl[i]),
                    float(terms.fairness[i]), float(terms.energy[i]))

    fit, genome, kl, fair, en = best
    return OptimizationResult(genome, fit, kl, en, fair, history)


HISTORY_COLUMNS = ("generation", "best_fitness", "best_kl_nats", "best_fairness",
                   "best_energy_fj") + GENE_NAMES


def history_csv(result: OptimizationResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for rec in result.history:
        writer.writerow([rec.generation, repr(rec.best_fitness), repr(rec.best_kl),
                         repr(rec.best_fairness), repr(rec.best_energy),
                         *(repr(x) for x in rec.best_genome)])
    return buf.getvalue()


def result_document(result: OptimizationResult, device: DeviceSpec, weights: FitnessWeights,
                    config: EvoConfig, target: Distribution4) -> dict:
    params = result.best_params
    v = outcome_probs(result.best_genome)
    return {
        "device": device.name,
        "weights": {"omega1": weights.w1, "omega2": weights.w2, "omega3": weights.w3},
        "config": config.to_dict(),
        "seed": config.seed,
        "target": target.to_list(),
        "best_genome": params.as_dict(),
        "exact_v": [float(x) for x in v],
        "exact_kl_nats": result.exact_kl,
        "fairness": result.best_fairness,
        "energy_fj": result.exact_energy,
        "energy_includes_hidden_coin": False,
        "best_fitness": result.best_fitness,
    }
