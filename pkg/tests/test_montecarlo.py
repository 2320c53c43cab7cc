import math

import numpy as np
import pytest

from cacc_safety.dynamics import ScenarioConfig
from cacc_safety.errors import DivergedRunError, InfeasibleGainsError
from cacc_safety.gains import GainSet
from cacc_safety.montecarlo import (
    CampaignConfig,
    aggregate,
    compare_results,
    compare_topologies,
    hoeffding_epsilon,
    hoeffding_min_samples,
    run_campaign,
)
from cacc_safety.stochastic import DecelDistribution, standin_distribution, uniform_distribution


def _search_min_samples(eps, delta):
    n = 1
    while 2 * math.exp(-2 * n * eps * eps) > delta:
        n += 1
    return n


@pytest.mark.parametrize("eps, delta, expected", [(0.05, 0.05, 738), (0.01, 0.05, 18445), (0.02, 0.01, 6623)])
def test_hoeffding_min_samples(eps, delta, expected):
    assert _search_min_samples(eps, delta) == expected
    assert hoeffding_min_samples(eps, delta) == expected


def test_hoeffding_trivial_and_invalid():
    assert hoeffding_min_samples(math.inf, 0.05) == 1
    for eps, delta in [(0.0, 0.05), (-1.0, 0.05), (0.1, 0.0), (0.1, 1.0)]:
        with pytest.raises(ValueError):
            hoeffding_min_samples(eps, delta)


def test_hoeffding_epsilon_inverts_min_samples():
    n = hoeffding_min_samples(0.03, 0.05)
    assert hoeffding_epsilon(n, 0.05) <= 0.03 < hoeffding_epsilon(n - 1, 0.05)


def test_aggregate_hand_example():
    cs = np.array([[1, 0, 1], [0, 0, 0], [1, 1, 1], [0, 1, 0]], dtype=np.int8)
    rv = np.array([[2.0, 0, 4.0], [0, 0, 0], [1.0, 1.0, 1.0], [0, 3.0, 0]])
    P, N, S_sum, S_per = aggregate(cs, rv)
    assert P == 0.75
    assert N == 6 / 4
    assert S_sum == pytest.approx((6 + 3 + 3) / 4)
    assert S_per == pytest.approx((3 + 1 + 3) / 4)


def test_degenerate_campaign_has_no_collisions():
    dist = DecelDistribution((5.0, 6.0, 7.0), (0.0, 1.0, 0.0))
    scen = ScenarioConfig(mode="uncoordinated", N=4)
    out = run_campaign(CampaignConfig(scen, dist, n=20, seed=1, D0_sweep=(6.0,)))
    m = out[0]
    assert (m.P, m.Nexp, m.S_sum, m.S_per_collision) == (0.0, 0.0, 0.0, 0.0)
    assert m.n_used == 20 and m.seed == 1


def test_sweep_validation():
    dist = uniform_distribution()
    with pytest.raises(ValueError, match="outside"):
        CampaignConfig(ScenarioConfig(), dist, D0_sweep=(3.0,))
    with pytest.raises(ValueError):
        CampaignConfig(ScenarioConfig(), dist, n=0)
    assert CampaignConfig(ScenarioConfig(), dist).D0_sweep == dist.values


def test_campaign_metric_bounds_and_determinism():
    dist = standin_distribution()
    cfg = CampaignConfig(ScenarioConfig(N=5, d=2.0, T=20.0), dist, n=120, seed=7, D0_sweep=(4.75, 9.75))
    a = run_campaign(cfg)
    b = run_campaign(cfg)
    assert a == b
    for m in a:
        assert 0 <= m.P <= m.Nexp <= 5
    assert a[1].Nexp > a[0].Nexp


def test_campaign_same_result_across_workers(monkeypatch):
    import cacc_safety.montecarlo as mc

    monkeypatch.setattr(mc, "CHUNK_ROWS", 40)
    dist = standin_distribution()
    cfg = CampaignConfig(ScenarioConfig(N=4, d=2.0, T=15.0), dist, n=100, seed=3, D0_sweep=(9.25,))
    assert run_campaign(cfg, threads=1) == run_campaign(cfg, threads=2)


def test_infeasible_gains_need_waiver():
    g = GainSet(0.2, 0.92, 0.03, 2, 0.86)
    dist = standin_distribution()
    scen = ScenarioConfig(gains=g, N=3, T=5.0)
    with pytest.raises(InfeasibleGainsError):
        run_campaign(CampaignConfig(scen, dist, n=5, D0_sweep=(9.75,)))
    with pytest.warns(UserWarning, match="outside"):
        out = run_campaign(CampaignConfig(scen, dist, n=5, D0_sweep=(9.75,), allow_infeasible_gains=True))
    assert len(out) == 1
    # the baseline never consults the gains
    run_campaign(CampaignConfig(scen.replace(mode="uncoordinated"), dist, n=5, D0_sweep=(9.75,)))


def test_divergence_names_coordinates():
    dist = uniform_distribution()
    scen = ScenarioConfig(mode="uncoordinated", N=2, v0=2e9, T=1.0)
    with pytest.raises(DivergedRunError) as exc:
        run_campaign(CampaignConfig(scen, dist, n=3, D0_sweep=(5.25,)))
    assert exc.value.D0 == 5.25
    assert exc.value.iteration == 0
    assert exc.value.step == 1


def _variant(r, d, **kw):
    dist = kw.pop("dist", standin_distribution())
    scen = ScenarioConfig(N=4, d=d, T=15.0, gains=GainSet(0.2, 0.92, 0.03, r, 0.86))
    return CampaignConfig(scen, dist, n=kw.pop("n", 40), seed=kw.pop("seed", 5), D0_sweep=(6.75, 9.75),
                          allow_infeasible_gains=True, **kw)


def test_identical_variants_give_zero_deltas():
    comp = compare_topologies([_variant(1, 4.0), _variant(1, 4.0)])
    for row in comp.deltas(0, 1):
        assert row["dP"] == row["dNexp"] == row["dS_sum"] == row["dS_per_collision"] == 0.0
    assert len(comp.delta_rows()) == 2


def test_compare_paired_variants():
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        comp = compare_topologies([_variant(1, 4.0), _variant(2, 2.0)])
    assert comp.variants == [(1, 4.0), (2, 2.0)]
    rows = comp.deltas(0, 1)
    assert [r["D0"] for r in rows] == [6.75, 9.75]
    for row, a, b in zip(rows, comp[(1, 4.0)], comp[(2, 2.0)]):
        assert row["dP"] == b.P - a.P


@pytest.mark.parametrize(
    "other",
    [
        dict(seed=6),
        dict(n=41),
        dict(dist=uniform_distribution()),
    ],
)
def test_compare_rejects_mismatched_variants(other):
    with pytest.raises(ValueError):
        compare_topologies([_variant(1, 4.0), _variant(2, 2.0, **other)])


def test_compare_results_rejects_mismatched_sweeps():
    a = run_campaign(CampaignConfig(ScenarioConfig(mode="uncoordinated", N=2, T=5.0), uniform_distribution(), n=3,
                                    D0_sweep=(5.25,)))
    b = run_campaign(CampaignConfig(ScenarioConfig(mode="uncoordinated", N=2, T=5.0), uniform_distribution(), n=3,
                                    D0_sweep=(6.25,)))
    with pytest.raises(ValueError, match="sweep"):
        compare_results([(1, 6.0), (1, 6.0)], [a, b])
