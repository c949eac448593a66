"""Exact analytics for two-coin and hidden-dependence coin circuits.

Outcomes are coded 0=HH, 1=HT, 2=TH, 3=TT (coin 1 first).  A
hidden-dependence circuit flips a selector coin with heads probability
``w``; heads hands out coin set 1 ``(p1, q1)``, tails coin set 2
``(p2, q2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

NORMALIZE_TOL = 1e-9
_BOUND_SLACK = 1e-12

GENE_NAMES = ("w", "p1", "q1", "p2", "q2")


def _check_probability(name: str, x: float) -> float:
    x = float(x)
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"{name} must be a probability in [0, 1], got {x!r}")
    return x


@dataclass(frozen=True)
class Distribution4:
    """Probability vector over the four outcomes.

    Inputs whose sum is within ``NORMALIZE_TOL`` of 1 are renormalized;
    anything further off is rejected.
    """

    probs: tuple

    def __post_init__(self):
        vals = [float(x) for x in self.probs]
        if len(vals) != 4:
            raise ValueError(f"expected 4 probabilities, got {len(vals)}")
        if not all(math.isfinite(x) for x in vals):
            raise ValueError(f"non-finite probability in {vals}")
        if any(x < -_BOUND_SLACK or x > 1.0 + _BOUND_SLACK for x in vals):
            raise ValueError(f"probabilities must lie in [0, 1]: {vals}")
        vals = [min(max(x, 0.0), 1.0) for x in vals]
        total = math.fsum(vals)
        if abs(total - 1.0) > NORMALIZE_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        if total != 1.0:
            vals = [x / total for x in vals]
        object.__setattr__(self, "probs", tuple(vals))

    def __getitem__(self, i: int) -> float:
        return self.probs[i]

    def __iter__(self):
        return iter(self.probs)

    def __len__(self) -> int:
        return 4

    def as_array(self) -> np.ndarray:
        return np.array(self.probs, dtype=float)

    def is_strictly_positive(self) -> bool:
        return all(x > 0.0 for x in self.probs)

    def to_list(self) -> list:
        return list(self.probs)


# The die used throughout: 0 with probability 1/2, 1-3 with 1/6 each.
DIE_TARGET = Distribution4((1 / 2, 1 / 6, 1 / 6, 1 / 6))
UNIFORM = Distribution4((0.25, 0.25, 0.25, 0.25))


@dataclass(frozen=True)
class CoinPair:
    p: float
    q: float

    def __post_init__(self):
        object.__setattr__(self, "p", _check_probability("p", self.p))
        object.__setattr__(self, "q", _check_probability("q", self.q))


@dataclass(frozen=True)
class CircuitParams:
    """The five evolved probabilities of a hidden-dependence circuit."""

    w: float
    p1: float
    q1: float
    p2: float
    q2: float

    def __post_init__(self):
        for name in GENE_NAMES:
            object.__setattr__(self, name, _check_probability(name, getattr(self, name)))

    @classmethod
    def from_genes(cls, genes: Iterable[float]) -> "CircuitParams":
        genes = [float(g) for g in genes]
        if len(genes) != 5:
            raise ValueError(f"expected 5 genes (w, p1, q1, p2, q2), got {len(genes)}")
        return cls(*genes)

    def as_tuple(self) -> tuple:
        return (self.w, self.p1, self.q1, self.p2, self.q2)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    def as_dict(self) -> dict:
        return dict(zip(GENE_NAMES, self.as_tuple()))

    def swapped(self) -> "CircuitParams":
        """Equivalent circuit with the two coin sets exchanged."""
        return CircuitParams(1.0 - self.w, self.p2, self.q2, self.p1, self.q1)


# Parameters reported for the optimized circuits on each device.  The
# VCMA entry takes the values from the results prose; the figure caption
# for that run repeats the SHE numbers.
PUBLISHED_PARAMS = {
    "td": CircuitParams(w=0.714, p1=0.891, q1=0.766, p2=0.107, q2=0.419),
    "mtj_she": CircuitParams(w=0.306, p1=0.448, q1=0.439, p2=0.746, q2=0.749),
    "mtj_vcma": CircuitParams(w=0.233, p1=0.237, q1=0.199, p2=0.781, q2=0.805),
}


def two_coin_product(pair: CoinPair) -> Distribution4:
    """Outcome distribution of two independent coins (HH, HT, TH, TT)."""
    p, q = pair.p, pair.q
    return Distribution4((p * q, p * (1.0 - q), (1.0 - p) * q, (1.0 - p) * (1.0 - q)))


def product_residual(target: Distribution4) -> float:
    """``|t0*t3 - t1*t2|``; zero exactly when the target factorizes."""
    t = target.probs
    return abs(t[0] * t[3] - t[1] * t[2])


def solve_two_coins(target: Distribution4, tol: float = 1e-9) -> Optional[CoinPair]:
    """Find independent coins reproducing ``target``, or ``None`` if none exist.

    The marginals give ``p = t0 + t1`` and ``q = t0 + t2``; the answer is
    accepted only if the product-form condition holds and the coins
    reproduce every entry within ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t = target.probs
    if product_residual(target) > tol:
        return None
    pair = CoinPair(min(t[0] + t[1], 1.0), min(t[0] + t[2], 1.0))
    rebuilt = two_coin_product(pair)
    if any(abs(a - b) > tol for a, b in zip(rebuilt.probs, t)):
        return None
    return pair


def exact_outcome_distribution(params: CircuitParams) -> Distribution4:
    w, p1, q1, p2, q2 = params.as_tuple()
    u = 1.0 - w
    return Distribution4((
        w * p1 * q1 + u * p2 * q2,
        w * p1 * (1.0 - q1) + u * p2 * (1.0 - q2),
        w * (1.0 - p1) * q1 + u * (1.0 - p2) * q2,
        w * (1.0 - p1) * (1.0 - q1) + u * (1.0 - p2) * (1.0 - q2),
    ))


def kl_divergence(v: Sequence[float], p: Sequence[float]) -> float:
    """KL(v || p) in nats, with ``0 * log(0 / p) = 0``.

    ``p`` must have full support.
    """
    v = tuple(v)
    p = tuple(p)
    if len(v) != len(p):
        raise ValueError("distributions differ in length")
    if any(pi <= 0.0 for pi in p):
        raise ValueError(f"reference distribution must be strictly positive: {p}")
    kl = math.fsum(vi * math.log(vi / pi) for vi, pi in zip(v, p) if vi > 0.0)
    # Rounding can leave a tiny negative when v == p.
    return max(kl, 0.0)


def fairness_penalty(params: CircuitParams) -> float:
    """Total distance of the four set coins from 0.5; ``w`` is not included."""
    return (abs(params.p1 - 0.5) + abs(params.p2 - 0.5)
            + abs(params.q1 - 0.5) + abs(params.q2 - 0.5))


# -- vectorized forms used by the optimizer ---------------------------------

def outcome_probs(genes: np.ndarray) -> np.ndarray:
    """Row-wise outcome distributions for an ``(..., 5)`` array of genomes."""
    g = np.asarray(genes, dtype=float)
    w, p1, q1, p2, q2 = (g[..., i] for i in range(5))
    u = 1.0 - w
    return np.stack([
        w * p1 * q1 + u * p2 * q2,
        w * p1 * (1.0 - q1) + u * p2 * (1.0 - q2),
        w * (1.0 - p1) * q1 + u * (1.0 - p2) * q2,
        w * (1.0 - p1) * (1.0 - q1) + u * (1.0 - p2) * (1.0 - q2),
    ], axis=-1)


def kl_rows(v: np.ndarray, target: Distribution4) -> np.ndarray:
    """KL of each row of ``v`` against ``target`` (nats)."""
    if not target.is_strictly_positive():
        raise ValueError(f"target must be strictly positive: {target.probs}")
    v = np.asarray(v, dtype=float)
    t = target.as_array()
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(v > 0.0, v * np.log(v / t), 0.0)
    return np.maximum(terms.sum(axis=-1), 0.0)


def fairness_rows(genes: np.ndarray) -> np.ndarray:
    g = np.asarray(genes, dtype=float)
    return np.abs(g[..., 1:] - 0.5).sum(axis=-1)
