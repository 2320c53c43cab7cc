"""Discrete maximum-deceleration distribution and reproducible sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DistributionError

SUM_TOL = 1e-12

#: Support used throughout the emergency-braking study: 4.75, 5.25, ..., 9.75 m/s^2.
DEFAULT_SUPPORT = tuple(4.75 + 0.5 * j for j in range(11))


def _as_fraction(p) -> Fraction:
    if isinstance(p, Fraction):
        return p
    if isinstance(p, str):
        return Fraction(p.strip())
    return Fraction(float(p))


@dataclass(frozen=True)
class DecelDistribution:
    """Probability mass over the ascending support ``values``.

    ``probs`` may be given as floats, Fractions or ``"a/b"`` strings. The exact
    rational weights are kept for combinatorial quantities; sampling uses floats.
    """

    values: tuple
    probs: tuple
    exact_probs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        try:
            exact = tuple(_as_fraction(p) for p in self.probs)
        except (ValueError, ZeroDivisionError) as exc:
            raise DistributionError(f"unparseable probability: {exc}") from None
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "probs", tuple(float(p) for p in exact))
        object.__setattr__(self, "exact_probs", exact)
        validate(self)

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def lower(self) -> float:
        return self.values[0]

    @property
    def upper(self) -> float:
        return self.values[-1]

    def cdf_table(self) -> np.ndarray:
        cum = np.cumsum(self.probs)
        last = max(j for j, p in enumerate(self.probs) if p > 0)
        cum[last:] = 1.0
        return cum

    def prob_of(self, value: float) -> float:
        return self.probs[self.values.index(value)]


def validate(dist: DecelDistribution) -> None:
    """Raise :class:`DistributionError` naming the first violated invariant."""
    values, probs = dist.values, dist.probs
    if len(values) < 1:
        raise DistributionError("support must contain at least one value (m >= 1)")
    if len(values) != len(probs):
        raise DistributionError(f"values and probs differ in length ({len(values)} vs {len(probs)})")
    if any(not np.isfinite(v) for v in values):
        raise DistributionError("support values must be finite")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise DistributionError(f"support must be strictly increasing: {list(values)}")
    if values[0] <= 0:
        raise DistributionError("maximum decelerations must be positive")
    if any(p < 0 for p in probs):
        raise DistributionError(f"probabilities must be non-negative: {list(probs)}")
    total = math.fsum(probs)
    if abs(total - 1.0) > SUM_TOL:
        raise DistributionError(f"probabilities must sum to 1, got {total!r}")


def uniform_distribution(values=DEFAULT_SUPPORT) -> DecelDistribution:
    m = len(values)
    return DecelDistribution(tuple(values), tuple(Fraction(1, m) for _ in range(m)))


def standin_distribution(values=DEFAULT_SUPPORT) -> DecelDistribution:
    """Gently peaked symmetric pmf: weight ``20 + min(j, m-1-j)`` on the j-th value.

    Non-authoritative stand-in for a bell-shaped histogram whose numeric values
    are not available. The peak is kept shallow so that ties between followers
    stay rare and the uncoordinated collision counts stay near six per run.
    """
    m = len(values)
    w = [20 + min(j, m - 1 - j) for j in range(m)]
    total = sum(w)
    return DecelDistribution(tuple(values), tuple(Fraction(x, total) for x in w))


def inverse_cdf(dist: DecelDistribution, u):
    """Map uniform variates in [0, 1) onto the support.

    Returns the smallest support value whose cumulative probability exceeds
    ``u``. Accepts scalars or arrays.
    """
    arr = np.asarray(u, dtype=float)
    if np.any((arr < 0) | (arr >= 1)) or np.any(np.isnan(arr)):
        raise ValueError("uniform variates must lie in [0, 1)")
    idx = np.searchsorted(dist.cdf_table(), arr, side="right")
    out = np.asarray(dist.values)[idx]
    return float(out) if out.ndim == 0 else out


def _philox_key(seed: int, stream: int) -> int:
    words = np.random.SeedSequence([int(seed) & (2**64 - 1), int(stream)]).generate_state(2, np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


def uniforms(seed: int, n: int, N: int, stream: int = 0, rows=None) -> np.ndarray:
    """Uniform variates ``U(seed, stream, i, l)`` for rows ``i`` and columns ``l < N``.

    Row ``i`` reads Philox counter block ``i`` under a key derived from
    ``(seed, stream)``, so any cell is reproducible on its own regardless of
    which rows are generated or in what order.
    """
    key = _philox_key(seed, stream)
    rows = range(n) if rows is None else rows
    out = np.empty((len(rows), N))
    for k, i in enumerate(rows):
        bitgen = np.random.Philox(key=key, counter=[0, 0, int(i), 0])
        out[k] = np.random.Generator(bitgen).random(N)
    return out


@dataclass(frozen=True)
class DecelMatrix:
    values: np.ndarray
    seed: int
    stream: int = 0

    @property
    def shape(self):
        return self.values.shape


def generate_matrix(
    dist: DecelDistribution, n: int, N: int, seed: int, stream: int = 0, rows=None
) -> DecelMatrix:
    """Draw the iterations-by-followers matrix of maximum decelerations."""
    if n < 1 or N < 1:
        raise ValueError("need n >= 1 and N >= 1")
    u = uniforms(seed, n, N, stream=stream, rows=rows)
    return DecelMatrix(inverse_cdf(dist, u), int(seed), int(stream))


@dataclass(frozen=True)
class AvoidanceProbability:
    exact: float
    first_k_product: float


def no_coord_avoidance_prob(dist: DecelDistribution, chain_length: int) -> AvoidanceProbability:
    """Probability that ``chain_length + 1`` i.i.d. draws come out strictly increasing.

    ``exact`` sums over every ordered subset of the support (the elementary
    symmetric polynomial of the weights, accumulated in rational arithmetic).
    ``first_k_product`` is the product of the first ``chain_length + 1`` weights,
    i.e. the probability of the single assignment D_{j-1} = D^_j.
    """
    k = chain_length + 1
    p = dist.exact_probs
    if k > len(p):
        return AvoidanceProbability(0.0, 0.0)
    e = [Fraction(1)] + [Fraction(0)] * k
    for pj in p:
        for j in range(k, 0, -1):
            e[j] += e[j - 1] * pj
    prod = Fraction(1)
    for pj in p[:k]:
        prod *= pj
    return AvoidanceProbability(float(e[k]), float(prod))
