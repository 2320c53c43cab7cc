"""Monte Carlo campaign over the leader's maximum deceleration."""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import COORDINATED, ScenarioConfig, simulate_batch
from .errors import DivergedRunError, InfeasibleGainsError
from .gains import region_check
from .stochastic import DecelDistribution, generate_matrix

#: Rows simulated per task; fixed so the work split never depends on the worker count.
CHUNK_ROWS = 500

RESULT_COLUMNS = ("r", "d_m", "D0_mps2", "P", "N_expected", "S_sum_mps", "S_per_collision_mps", "n", "seed")


def hoeffding_min_samples(eps: float, delta: float) -> int:
    """Smallest ``n`` with ``2 exp(-2 n eps^2) <= delta``."""
    if eps <= 0 or not 0 < delta < 1:
        raise ValueError("need eps > 0 and 0 < delta < 1")
    if math.isinf(eps):
        return 1
    return max(1, math.ceil(math.log(2 / delta) / (2 * eps**2)))


def hoeffding_epsilon(n: int, delta: float) -> float:
    """Half-width guaranteed at confidence ``1 - delta`` after ``n`` bounded samples."""
    return math.sqrt(math.log(2 / delta) / (2 * n))


@dataclass(frozen=True)
class CampaignConfig:
    scenario: ScenarioConfig
    dist: DecelDistribution
    n: int = 2000
    seed: int = 0
    D0_sweep: Optional[tuple] = None
    tau0: float = 0.5
    allow_infeasible_gains: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        sweep = tuple(float(x) for x in (self.D0_sweep if self.D0_sweep is not None else self.dist.values))
        lo, hi = self.dist.lower, self.dist.upper
        bad = [x for x in sweep if not lo <= x <= hi]
        if bad:
            raise ValueError(f"D0 sweep values {bad} lie outside [{lo}, {hi}]")
        if not sweep:
            raise ValueError("empty D0 sweep")
        object.__setattr__(self, "D0_sweep", sweep)


@dataclass(frozen=True)
class SafetyMetrics:
    D0: float
    P: float
    Nexp: float
    S_sum: float
    S_per_collision: float
    n_used: int
    seed: int
    r: int = 1
    d: float = 0.0

    def row(self) -> tuple:
        return (self.r, self.d, self.D0, self.P, self.Nexp, self.S_sum, self.S_per_collision, self.n_used, self.seed)


def aggregate(cs: np.ndarray, rv: np.ndarray) -> tuple:
    """Reduce per-iteration outcomes to ``(P, Nexp, S_sum, S_per_collision)``.

    Sums are exactly rounded (``math.fsum``), so the result is independent of
    how the iterations were split across workers.
    """
    n = cs.shape[0]
    counts = cs.sum(axis=1, dtype=np.int64)
    rv_sum = [math.fsum(row) for row in rv.tolist()]
    severity = [s / c if c else 0.0 for s, c in zip(rv_sum, counts.tolist())]
    P = int(np.count_nonzero(counts)) / n
    Nexp = int(counts.sum()) / n
    return P, Nexp, math.fsum(rv_sum) / n, math.fsum(severity) / n


def _run_chunk(scenario: ScenarioConfig, dist, n, seed, stream, start, stop):
    M = generate_matrix(dist, n, scenario.N, seed, stream=stream, rows=range(start, stop))
    try:
        out = simulate_batch(scenario, M.values)
    except DivergedRunError as err:
        err.iteration = start + getattr(err, "row", 0)
        err.D0 = scenario.D0
        raise
    return out.cs, out.rv


def check_gains(cfg: CampaignConfig) -> None:
    scen = cfg.scenario
    if scen.mode != COORDINATED:
        return
    report = region_check(scen.gains, cfg.tau0)
    if report.feasible:
        return
    msg = (
        f"gains ka={scen.gains.ka} kv={scen.gains.kv} kp={scen.gains.kp} hw={scen.gains.hw} "
        f"are outside the string-stable region for r={scen.r} "
        f"(margin1={report.margin1:.4g}, margin2={report.margin2:.4g})"
    )
    if not cfg.allow_infeasible_gains:
        raise InfeasibleGainsError(msg)
    warnings.warn(msg, stacklevel=3)


def run_campaign(cfg: CampaignConfig, threads: int = 1) -> list:
    """Evaluate the safety metrics at every leader deceleration in the sweep.

    For sweep index ``j`` the follower capabilities come from the matrix seeded
    by ``(seed, j)``, so variants sharing a seed see identical draws.
    """
    check_gains(cfg)
    tasks = []
    for j, D0 in enumerate(cfg.D0_sweep):
        scen = cfg.scenario.replace(D0=D0)
        for start in range(0, cfg.n, CHUNK_ROWS):
            stop = min(cfg.n, start + CHUNK_ROWS)
            tasks.append((j, (scen, cfg.dist, cfg.n, cfg.seed, j, start, stop)))

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_chunk, *args) for _, args in tasks]
            chunks = [f.result() for f in futures]
    else:
        chunks = [_run_chunk(*args) for _, args in tasks]

    results = []
    for j, D0 in enumerate(cfg.D0_sweep):
        mine = [c for (jj, _), c in zip(tasks, chunks) if jj == j]
        cs = np.vstack([c[0] for c in mine])
        rv = np.vstack([c[1] for c in mine])
        P, Nexp, S_sum, S_per = aggregate(cs, rv)
        results.append(SafetyMetrics(D0, P, Nexp, S_sum, S_per, cfg.n, cfg.seed, cfg.scenario.r, cfg.scenario.d))
    return results


@dataclass
class TopologyComparison:
    """Aligned per-D0 metrics for several ``(r, d)`` variants, in input order."""

    variants: list = field(default_factory=list)
    metrics: list = field(default_factory=list)

    def __getitem__(self, variant) -> list:
        return self.metrics[self.variants.index(variant)]

    def deltas(self, i: int, j: int) -> list:
        """Per-D0 ``metric(j) - metric(i)`` for P, Nexp, S_sum and S_per_collision."""
        rows = []
        for ma, mb in zip(self.metrics[i], self.metrics[j]):
            rows.append(
                {
                    "D0": ma.D0,
                    "dP": mb.P - ma.P,
                    "dNexp": mb.Nexp - ma.Nexp,
                    "dS_sum": mb.S_sum - ma.S_sum,
                    "dS_per_collision": mb.S_per_collision - ma.S_per_collision,
                }
            )
        return rows

    def delta_rows(self) -> list:
        rows = []
        for i, j in itertools.combinations(range(len(self.variants)), 2):
            (ra, da), (rb, db) = self.variants[i], self.variants[j]
            for item in self.deltas(i, j):
                rows.append({"base_r": ra, "base_d_m": da, "other_r": rb, "other_d_m": db, **item})
        return rows


def compare_results(variants: Sequence, metrics: Sequence) -> TopologyComparison:
    sweeps = {tuple(m.D0 for m in ms) for ms in metrics}
    if len(sweeps) > 1:
        raise ValueError("variants were evaluated on different D0 sweeps")
    return TopologyComparison(list(variants), list(metrics))


def compare_topologies(cfgs: Sequence[CampaignConfig], threads: int = 1) -> TopologyComparison:
    """Run each variant and align the outcomes by D0.

    Variants must share seed, iteration count, pmf and sweep so that every
    difference comes from ``(r, d)`` alone.
    """
    if not cfgs:
        raise ValueError("no variants given")
    base = cfgs[0]
    for c in cfgs[1:]:
        if c.seed != base.seed or c.n != base.n or c.dist != base.dist:
            raise ValueError("variants must share seed, n and the deceleration pmf")
        if c.D0_sweep != base.D0_sweep:
            raise ValueError("variants were configured with different D0 sweeps")
    variants = [(c.scenario.r, c.scenario.d) for c in cfgs]
    metrics = [run_campaign(c, threads=threads) for c in cfgs]
    return compare_results(variants, metrics)
