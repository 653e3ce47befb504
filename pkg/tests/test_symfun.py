from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ekreduce.errors import IndexOutOfRange
from ekreduce.symfun import (
    certified_k0, eigen_tuple, in_gamma_cone, lemma_bounds, maclaurin_means, reduced_table,
    sample_lemma_tuples, sigma, sigma_all, sigma_gradient, sigma_reduced,
)
from oracles import central_diff, sigma_enum

tuples = arrays(np.float64, st.integers(1, 8), elements=st.floats(-3, 3))


def test_sigma_examples():
    assert sigma(2, [1, 1, 1]) == 3
    assert sigma(2, [3, 2, 1]) == 11
    assert sigma(3, [3, 2, 1]) == 6
    assert sigma(0, [4, 5]) == 1
    assert sigma(2, [3, 0, 2, 1]) == sigma(2, [3, 2, 1])


def test_sigma_index_errors():
    with pytest.raises(IndexOutOfRange):
        sigma(4, [1, 2, 3])
    with pytest.raises(IndexOutOfRange):
        sigma(-1, [1, 2, 3])
    with pytest.raises(IndexOutOfRange):
        sigma_reduced(3, 0, [1, 2, 3])
    with pytest.raises(IndexOutOfRange):
        sigma_reduced(1, 3, [1, 2, 3])
    with pytest.raises(IndexOutOfRange):
        in_gamma_cone(0, [1, 2])
    with pytest.raises(IndexOutOfRange):
        sigma_gradient(0, [1, 2])


@given(tuples)
def test_recurrence_matches_enumeration(lam):
    s = sigma_all(lam)
    for k in range(lam.size + 1):
        ref = sigma_enum(k, lam)
        assert abs(s[k] - ref) <= 1e-12 * max(1.0, abs(ref), np.prod(1 + np.abs(lam)))


def test_sigma_exact_on_integers(rng):
    lam = rng.integers(-5, 6, size=12).astype(float)
    for k in range(13):
        assert sigma(k, lam) == sigma_enum(k, lam)


def test_sigma_reduced_examples():
    assert sigma_reduced(1, 0, [5, 1, -0.5]) == pytest.approx(0.5)


@given(tuples)
def test_reduced_identities(lam):
    n = lam.size
    s = sigma_all(lam)
    table = reduced_table(lam)
    scale = np.prod(1 + np.abs(lam))
    for i in range(n):
        assert abs(lam[i] - (s[1] - table[i, 1] if n > 1 else s[1])) <= 1e-12 * scale
    for j in range(1, n + 1):
        assert abs(table[:, j - 1].sum() - (n - j + 1) * s[j - 1]) <= 1e-12 * scale


def test_gamma_cone_examples():
    assert all(in_gamma_cone(k, np.ones(5)) for k in range(1, 6))
    assert in_gamma_cone(2, [5, 1, -0.5])
    assert not in_gamma_cone(3, [5, 1, -0.5])
    assert sigma(3, [5, 1, -0.5]) == pytest.approx(-2.5)
    assert not any(in_gamma_cone(k, [1, -2, 0.5]) for k in range(1, 4))


def test_sigma_gradient(rng):
    assert np.allclose(sigma_gradient(1, [3, 2, 1, 7]), 1)
    lam = rng.normal(size=5)
    assert np.allclose(sigma_gradient(5, lam), [np.prod(np.delete(lam, i)) for i in range(5)])
    for k in range(1, 6):
        fd = central_diff(lambda v: sigma(k, v), lam, 1e-6)
        assert np.max(np.abs(sigma_gradient(k, lam) - fd)) <= 1e-7


def _cone_samples(rng, n, k, count):
    out = []
    while len(out) < count:
        lam = rng.normal(0.8, 1.0, size=(4 * count, n))
        out.extend(lam[in_gamma_cone(k, lam)])
    return np.array(out[:count])


def test_maclaurin_chain(rng):
    for n in range(2, 9):
        for k in range(1, n + 1):
            lam = _cone_samples(rng, n, k, 1000 // n)
            means = maclaurin_means(lam)[:, :k]
            assert np.all(np.diff(means, axis=1) <= 1e-12 * (1 + means[:, :-1]))


def test_positivity_propagation(rng):
    for n, k in [(3, 2), (4, 3), (5, 3), (6, 4)]:
        lam = _cone_samples(rng, n, k, 300)
        table = reduced_table(lam)
        assert np.all(table[..., 1:k] > 0)


def test_sigma_k_root_concave(rng):
    for n, k in [(3, 2), (4, 3), (5, 2)]:
        a = _cone_samples(rng, n, k, 1000)
        b = _cone_samples(rng, n, k, 1000)
        f = lambda v: sigma_all(v)[..., k] ** (1.0 / k)
        assert np.all(f(0.5 * (a + b)) >= 0.5 * f(a) + 0.5 * f(b) - 1e-12)


def test_eigen_tuple_descending():
    assert list(eigen_tuple([1, 3, 2])) == [3, 2, 1]


def test_lemma_examples():
    rep = lemma_bounds([5, 1, -0.5], 2, 5.5)
    assert rep.hypotheses_hold
    assert min(rep.conclusion_margins) >= 0
    assert 5 <= rep.K0_empirical
    rep = lemma_bounds(np.ones(4), 4, 4)
    assert rep.hypotheses_hold
    # sigma_1(lam | i) = 3 is the binding constraint at the symmetric point
    assert rep.K0_empirical == pytest.approx(3.0)
    assert np.all(np.abs(np.ones(4)) <= rep.K0_empirical)
    t = 10.0
    rep = lemma_bounds([t, 1 / t, 1], 2, 5.0)
    assert not rep.hypotheses_hold
    assert all(np.isnan(rep.conclusion_margins))


def test_lemma_sampled_margins(rng):
    for n, k in [(3, 2), (4, 2), (4, 3), (5, 3)]:
        A = 4.0
        for lam in sample_lemma_tuples(n, k, A, 200, rng):
            rep = lemma_bounds(lam, k, A)
            assert rep.hypotheses_hold and rep.uno_holds and rep.due_holds
            assert min(rep.conclusion_margins) >= 0
            assert rep.K0_empirical <= rep.K0_certified


def test_certified_k0_monotone_in_A():
    vals = [certified_k0(A, 5, 3) for A in (1.5, 2, 4, 8)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_binomial_at_symmetric_point():
    for n in range(1, 8):
        s = sigma_all(np.ones(n))
        assert list(s) == [comb(n, j) for j in range(n + 1)]
