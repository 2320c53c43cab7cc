"""Exact safety metrics for small platoons, by enumerating every capability combination."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .dynamics import ScenarioConfig, simulate_batch
from .errors import BudgetExceededError
from .montecarlo import CampaignConfig, SafetyMetrics, hoeffding_epsilon, run_campaign
from .stochastic import DecelDistribution

COMBINATION_BUDGET = 10**6
_BATCH = 20_000


@dataclass(frozen=True)
class ExactMetrics:
    P_exact: float
    Nexp_exact: float
    S_sum_exact: float
    S_per_collision_exact: float
    combinations: int
    colliding: int


def enumerate_exact(
    cfg: ScenarioConfig, dist: DecelDistribution, D0: Optional[float] = None, budget: int = COMBINATION_BUDGET
) -> ExactMetrics:
    """Probability-weighted metrics over all ``m**N`` follower capability assignments.

    Probability and expected count are accumulated in rational arithmetic from
    the distribution's exact weights; severities are exactly-rounded float sums.
    """
    total = dist.m**cfg.N
    if total > budget:
        raise BudgetExceededError(f"{dist.m}^{cfg.N} = {total} combinations exceeds the budget of {budget}")
    if D0 is not None:
        cfg = cfg.replace(D0=D0)
    values = np.asarray(dist.values)
    P = Fraction(0)
    Nexp = Fraction(0)
    S_sum_terms, S_per_terms = [], []
    colliding = 0
    combos = itertools.product(range(dist.m), repeat=cfg.N)
    while True:
        block = list(itertools.islice(combos, _BATCH))
        if not block:
            break
        idx = np.asarray(block)
        out = simulate_batch(cfg, values[idx])
        counts = out.cs.sum(axis=1).tolist()
        for combo, c, rvs in zip(block, counts, out.rv.tolist()):
            if not c:
                continue
            w = math.prod((dist.exact_probs[j] for j in combo), start=Fraction(1))
            if w == 0:
                continue
            colliding += 1
            P += w
            Nexp += c * w
            s = math.fsum(rvs)
            S_sum_terms.append(float(w) * s)
            S_per_terms.append(float(w) * s / c)
    return ExactMetrics(float(P), float(Nexp), math.fsum(S_sum_terms), math.fsum(S_per_terms), total, colliding)


@dataclass(frozen=True)
class OracleReport:
    exact: ExactMetrics
    mc: SafetyMetrics
    eps: float
    delta: float
    N: int

    @property
    def err_P(self) -> float:
        return abs(self.mc.P - self.exact.P_exact)

    @property
    def err_Nexp_normalized(self) -> float:
        return abs(self.mc.Nexp - self.exact.Nexp_exact) / self.N

    @property
    def err_S_sum(self) -> float:
        return abs(self.mc.S_sum - self.exact.S_sum_exact)

    @property
    def err_S_per_collision(self) -> float:
        return abs(self.mc.S_per_collision - self.exact.S_per_collision_exact)

    @property
    def passed(self) -> bool:
        if self.exact.colliding == 0:
            zeros = (self.mc.P, self.mc.Nexp, self.mc.S_sum, self.mc.S_per_collision)
            return all(z == 0 for z in zeros)
        return self.err_P <= self.eps and self.err_Nexp_normalized <= self.eps

    def text(self) -> str:
        lines = [
            f"D0 = {self.mc.D0:g} m/s^2, N = {self.N}, n = {self.mc.n_used}, seed = {self.mc.seed}",
            f"Hoeffding half-width eps = {self.eps:.6g} at delta = {self.delta:g}",
            f"{'metric':<18}{'exact':>14}{'monte carlo':>14}{'abs error':>14}",
            f"{'P':<18}{self.exact.P_exact:>14.6g}{self.mc.P:>14.6g}{self.err_P:>14.6g}",
            f"{'N_expected':<18}{self.exact.Nexp_exact:>14.6g}{self.mc.Nexp:>14.6g}"
            f"{abs(self.mc.Nexp - self.exact.Nexp_exact):>14.6g}",
            f"{'S_sum':<18}{self.exact.S_sum_exact:>14.6g}{self.mc.S_sum:>14.6g}{self.err_S_sum:>14.6g}",
            f"{'S_per_collision':<18}{self.exact.S_per_collision_exact:>14.6g}"
            f"{self.mc.S_per_collision:>14.6g}{self.err_S_per_collision:>14.6g}",
            f"result: {'PASS' if self.passed else 'FAIL'}",
        ]
        return "\n".join(lines)


def mc_vs_oracle(
    cfg: ScenarioConfig,
    dist: DecelDistribution,
    D0: float,
    n: int,
    seed: int,
    delta: float = 0.01,
    exact: Optional[ExactMetrics] = None,
    allow_infeasible_gains: bool = True,
) -> OracleReport:
    """Compare a Monte Carlo estimate against the enumerated truth.

    Passes when P and Nexp/N (both bounded in [0, 1]) lie within the Hoeffding
    half-width for ``n`` samples at confidence ``1 - delta``.
    """
    if exact is None:
        exact = enumerate_exact(cfg, dist, D0)
    camp = CampaignConfig(cfg, dist, n=n, seed=seed, D0_sweep=(D0,), allow_infeasible_gains=allow_infeasible_gains)
    (mc,) = run_campaign(camp)
    return OracleReport(exact, mc, hoeffding_epsilon(n, delta), delta, cfg.N)
