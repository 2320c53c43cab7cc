import itertools
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cacc_safety.errors import DistributionError
from cacc_safety.stochastic import (
    DEFAULT_SUPPORT,
    DecelDistribution,
    generate_matrix,
    inverse_cdf,
    no_coord_avoidance_prob,
    standin_distribution,
    uniform_distribution,
    uniforms,
)


def test_default_support():
    assert DEFAULT_SUPPORT == (4.75, 5.25, 5.75, 6.25, 6.75, 7.25, 7.75, 8.25, 8.75, 9.25, 9.75)


@pytest.mark.parametrize(
    "values, probs, needle",
    [
        ((), (), "at least one"),
        ((5.0, 6.0), (1.0,), "differ in length"),
        ((6.0, 5.0), (0.5, 0.5), "strictly increasing"),
        ((5.0, 5.0), (0.5, 0.5), "strictly increasing"),
        ((-1.0, 5.0), (0.5, 0.5), "positive"),
        ((5.0, 6.0), (1.2, -0.2), "non-negative"),
        ((5.0, 6.0), (0.5, 0.6), "sum to 1"),
        ((5.0, float("inf")), (0.5, 0.5), "finite"),
    ],
)
def test_validate_names_invariant(values, probs, needle):
    with pytest.raises(DistributionError, match=needle):
        DecelDistribution(values, probs)


def test_distribution_error_is_value_error():
    with pytest.raises(ValueError):
        DecelDistribution((5.0,), (0.5,))


def test_fraction_strings_are_exact():
    d = DecelDistribution((5.0, 6.0, 7.0), ("1/3", "1/3", "1/3"))
    assert d.exact_probs == (F(1, 3),) * 3
    assert d.m == 3 and d.lower == 5.0 and d.upper == 7.0


def test_standin_is_symmetric_and_peaked():
    d = standin_distribution()
    assert sum(d.exact_probs) == 1
    assert d.exact_probs == tuple(reversed(d.exact_probs))
    assert max(d.exact_probs) == d.exact_probs[5] == F(25, 245)
    assert all(p > 0 for p in d.probs)


def test_inverse_cdf_uniform_edges():
    d = uniform_distribution()
    assert inverse_cdf(d, 0.0) == 4.75
    assert inverse_cdf(d, 0.5) == 7.25
    assert inverse_cdf(d, np.nextafter(1.0, 0.0)) == 9.75
    # a cumulative breakpoint belongs to the next cell
    cdf = d.cdf_table()
    for j in range(10):
        assert inverse_cdf(d, cdf[j]) == DEFAULT_SUPPORT[j + 1]
        assert inverse_cdf(d, np.nextafter(cdf[j], 0.0)) == DEFAULT_SUPPORT[j]


def test_inverse_cdf_rejects_out_of_range():
    d = uniform_distribution()
    for bad in (1.0, -1e-9, float("nan")):
        with pytest.raises(ValueError):
            inverse_cdf(d, bad)


def test_inverse_cdf_skips_zero_mass():
    d = DecelDistribution((5.0, 6.0, 7.0), (0.5, 0.0, 0.5))
    u = np.linspace(0, 1, 1001, endpoint=False)
    assert set(inverse_cdf(d, u)) == {5.0, 7.0}


def test_degenerate_pmf():
    d = DecelDistribution((5.0, 6.0, 7.0), (0.0, 1.0, 0.0))
    m = generate_matrix(d, 50, 4, seed=3)
    assert np.all(m.values == 6.0)


def test_matrix_deterministic_and_row_addressable():
    d = standin_distribution()
    a = generate_matrix(d, 40, 10, seed=42, stream=3)
    b = generate_matrix(d, 40, 10, seed=42, stream=3)
    assert np.array_equal(a.values, b.values)
    sub = generate_matrix(d, 40, 10, seed=42, stream=3, rows=[37, 5])
    assert np.array_equal(sub.values, a.values[[37, 5]])
    other = generate_matrix(d, 40, 10, seed=42, stream=4)
    assert not np.array_equal(other.values, a.values)


def test_uniforms_range():
    u = uniforms(7, 200, 10)
    assert u.shape == (200, 10)
    assert np.all((u >= 0) & (u < 1))


def test_empirical_frequencies_chi_square():
    d = standin_distribution()
    n, N = 20_000, 10
    vals = generate_matrix(d, n, N, seed=11).values.ravel()
    counts = np.array([(vals == v).sum() for v in d.values])
    expected = np.array(d.probs) * vals.size
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # 10 degrees of freedom; 0.999 quantile is 29.59
    assert chi2 < 29.59


def test_empirical_frequency_binomial_band():
    d = DecelDistribution((5.0, 9.0), (0.3, 0.7))
    vals = generate_matrix(d, 10_000, 1, seed=5).values
    k = int((vals == 5.0).sum())
    sd = math.sqrt(10_000 * 0.3 * 0.7)
    assert abs(k - 3000) < 5 * sd


def _brute_increasing(probs, k):
    total = F(0)
    for combo in itertools.product(range(len(probs)), repeat=k):
        if all(a < b for a, b in zip(combo, combo[1:])):
            term = F(1)
            for j in combo:
                term *= probs[j]
            total += term
    return total


@pytest.mark.parametrize("m, k", [(2, 2), (3, 2), (4, 3), (5, 5), (6, 3), (5, 6)])
def test_avoidance_prob_matches_brute_force(m, k):
    d = uniform_distribution(tuple(float(v) for v in range(1, m + 1)))
    res = no_coord_avoidance_prob(d, k - 1)
    assert res.exact == float(_brute_increasing(d.exact_probs, k))
    if k <= m:
        assert res.exact == float(F(math.comb(m, k), m**k))


def test_avoidance_prob_two_values():
    d = uniform_distribution((5.0, 6.0))
    res = no_coord_avoidance_prob(d, 1)
    assert res.exact == 0.25
    assert res.first_k_product == 0.25


@given(st.lists(st.integers(1, 9), min_size=2, max_size=5), st.integers(1, 4))
def test_avoidance_prob_nonuniform(weights, k):
    total = sum(weights)
    probs = tuple(F(w, total) for w in weights)
    d = DecelDistribution(tuple(float(v) for v in range(1, len(weights) + 1)), probs)
    assert no_coord_avoidance_prob(d, k - 1).exact == float(_brute_increasing(probs, k))


def test_avoidance_prob_uniform_eleven_is_exact():
    res = no_coord_avoidance_prob(uniform_distribution(), 10)
    assert res.exact == float(F(1, 11**11))
    assert res.exact == pytest.approx(3.5049e-12, rel=1e-4)
