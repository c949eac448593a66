"""Codesign of hidden-dependence coin-flip circuits on stochastic device models."""

from .circuit import (
    EmpiricalDistribution,
    HiddenDependenceCircuit,
    empirical_kl,
    expected_energy_per_sample,
    sample_n,
    sample_once,
)
from .devices import (
    DeviceConfigError,
    DeviceSpec,
    FlipRecord,
    expected_energy_per_flip,
    flip,
    generate_bitstream,
    load_device,
    load_device_config,
)
from .evo import EvoConfig, FitnessWeights, OptimizationResult, evolve, fitness
from .prob import (
    DIE_TARGET,
    PUBLISHED_PARAMS,
    CircuitParams,
    CoinPair,
    Distribution4,
    exact_outcome_distribution,
    fairness_penalty,
    kl_divergence,
    solve_two_coins,
    two_coin_product,
)

__version__ = "0.1.0"
