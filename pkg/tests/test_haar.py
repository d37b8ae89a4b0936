from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.corona import StoppingForest, build_cz_energy_forest
from artifact.haar import FunctionOnAtoms, HaarSystem, ZeroMass, lp_norm
from artifact.measure_grid import AtomicMeasure, DyadicInterval as D, Grid
from artifact.suite import _fs_ratio, pm_finding

from conftest import instances, make


@pytest.fixture
def two():
    g = Grid(1, 1, r=0, check=False)
    return g, AtomicMeasure({Fraction(1, 2): 1, Fraction(3, 2): 1})


def test_expectation_examples(two):
    g, mu = two
    hs = HaarSystem(g, mu)
    f = [1.0, 3.0]
    assert hs.expectation(f, D(0, 0)) == 2
    assert hs.expectation(f, D(1, 0)) == 1
    g2 = Grid(2, 2, r=0, check=False)
    with pytest.raises(ZeroMass):
        HaarSystem(g2, mu).expectation(f, D(1, 1))


def test_haar_function_examples(two):
    g, mu = two
    h, deg = HaarSystem(g, mu).haar_function(g.top)
    assert not deg
    assert np.allclose(h, [-2 ** -0.5, 2 ** -0.5])
    lop = AtomicMeasure({Fraction(1, 4): 1, Fraction(3, 4): 1})
    h, deg = HaarSystem(g, lop).haar_function(g.top)
    assert deg and not h.any()
    mu3 = AtomicMeasure({Fraction(1, 2): 1, Fraction(3, 2): 3})
    h, _ = HaarSystem(g, mu3).haar_function(g.top)
    assert np.isclose(np.dot(h, mu3.w), 0) and np.isclose(np.dot(h * h, mu3.w), 1)
    assert np.isclose(h[0], -np.sqrt(3) / 2)


def test_martingale_difference_example(two):
    g, mu = two
    hs = HaarSystem(g, mu)
    c, d = hs.martingale_difference([1.0, 3.0], g.top)
    assert np.isclose(c, np.sqrt(2))
    assert np.allclose(d, [-1, 1])
    assert hs.martingale_difference([5.0, 5.0], g.top)[0] == 0


def test_square_function_example(two):
    g, mu = two
    hs = HaarSystem(g, mu)
    S = hs.square_function([1.0, 3.0])
    assert np.allclose(S, [1, 1])
    assert np.isclose(lp_norm(S, mu.w, 2) ** 2, 2)


def test_dyadic_maximal_example(two):
    g, mu = two
    hs = HaarSystem(g, mu)
    f = np.array([1.0, 3.0])
    assert hs.dyadic_maximal(f)[0] == 2
    assert np.allclose(hs.dyadic_maximal(np.array([4.0, 4.0])), [4, 4])
    assert np.allclose(hs.dyadic_maximal([f]), hs.dyadic_maximal(f))


def test_function_on_atoms_validation(two):
    _, mu = two
    with pytest.raises(ValueError):
        FunctionOnAtoms(mu, [1.0])
    with pytest.raises(ValueError):
        FunctionOnAtoms(mu, [1.0, np.inf])


@settings(max_examples=40, deadline=None)
@given(instances(max_atoms=12))
def test_orthonormality(inst):
    hs = HaarSystem(inst.grid, inst.pair.sigma)
    w = inst.pair.sigma.w
    Qs = hs.support_candidates()
    if not Qs:
        return
    H = np.array([hs.haar_function(Q)[0] for Q in Qs])
    G = (H * w) @ H.T
    assert np.allclose(G, np.eye(len(Qs)), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(instances(max_atoms=12))
def test_telescoping_exact(inst):
    mu = inst.pair.sigma
    hs = HaarSystem(inst.grid, mu, exact=True)
    f = list(inst.f_exact)
    diffs = hs.differences(f)
    rec = hs.project(f, list(diffs))
    mean = hs.expectation(f, inst.grid.top)
    assert [mean + r for r in rec] == f


@settings(max_examples=30, deadline=None)
@given(instances(max_atoms=10))
def test_delta_matches_haar_route(inst):
    mu = inst.pair.sigma
    hs = HaarSystem(inst.grid, mu)
    for Q in hs.support_candidates():
        _, d1 = hs.martingale_difference(inst.f, Q)
        assert np.allclose(d1, hs.delta(inst.f, Q), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(instances(max_atoms=10))
def test_haar_square_function_is_isometric_at_p2(inst):
    mu = inst.pair.sigma
    hs = HaarSystem(inst.grid, mu)
    dev = inst.f - np.dot(inst.f, mu.w) / mu.w.sum()
    S = hs.square_function(inst.f)
    assert np.isclose(lp_norm(S, mu.w, 2), lp_norm(dev, mu.w, 2), rtol=1e-9, atol=1e-12)


def test_corona_with_single_top_is_deviation():
    inst = make(3, ns=10, nw=10)
    mu = inst.pair.sigma
    hs = HaarSystem(inst.grid, mu)
    fo = StoppingForest(inst.grid, inst.grid.top, [])
    S = hs.square_function(inst.f, "corona", forest=fo)
    dev = inst.f - np.dot(inst.f, mu.w) / mu.w.sum()
    assert np.allclose(S, np.abs(dev), atol=1e-12)


def test_nearby_large_delta_is_band():
    inst = make(5, ns=10, nw=10)
    hs = HaarSystem(inst.grid, inst.pair.sigma)
    # with huge delta only Q containing the point survive; rho = 0 keeps Q = I
    S = hs.square_function(inst.f, "nearby", rho=0, delta=1e6)
    assert np.allclose(S, hs.square_function(inst.f), atol=1e-12)


@pytest.mark.parametrize("seed", range(12))
@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_corona_square_band(seed, p):
    inst = make(seed, ns=12, nw=12)
    mu = inst.pair.sigma
    fo = build_cz_energy_forest(inst.pair, inst.f, p, 4.0)
    hs = HaarSystem(inst.grid, mu)
    dev = inst.f - np.dot(inst.f, mu.w) / mu.w.sum()
    r = lp_norm(hs.square_function(inst.f, "corona", forest=fo), mu.w, p) / lp_norm(dev, mu.w, p)
    assert 1 / 16 <= r <= 16


@pytest.mark.parametrize("seed", range(8))
def test_fefferman_stein_guard(seed):
    inst = make(seed, ns=14, nw=6)
    for p in (1.5, 2.0, 3.0):
        assert _fs_ratio(inst.grid, inst.pair.sigma, p, seed) <= 16


def _pm_oracle(grid, mu, f):
    """Float route through the Haar functions: max |P f| / (2 M(1_S f))."""
    hs = HaarSystem(grid, mu)
    worst = 0.0
    for S in grid.all_intervals():
        lo, hi = grid.lo(S), grid.hi(S)
        inS = np.array([lo <= x < hi for x in mu.positions])
        if not inS.any():
            continue
        M = hs.dyadic_maximal(np.where(inS, f, 0.0))
        acc = np.zeros(len(mu))
        for k in range(S.k, grid.L):
            for Q in grid.descendants(S, include_self=True):
                if Q.k == k and hs.nondegenerate(Q):
                    acc += hs.martingale_difference(f, Q)[1]
            a, m = np.abs(acc[inS]), 2 * M[inS]
            assert np.all(a[m == 0] < 1e-12)
            if (m > 0).any():
                worst = max(worst, float((a[m > 0] / m[m > 0]).max()))
    return worst


@pytest.mark.parametrize("seed", range(4))
def test_pointwise_maximal_domination(seed):
    inst = make(seed, ns=8, nw=4, L=6)
    mu = inst.pair.sigma
    assert pm_finding(inst.grid, mu, inst.f_exact).ok
    assert _pm_oracle(inst.grid, mu, inst.f) <= 1 + 1e-12
