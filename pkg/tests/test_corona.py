from fractions import Fraction
from math import ceil

import numpy as np
import pytest
from hypothesis import given, settings

from artifact.characteristics import stopping_energy
from artifact.corona import (MismatchedTops, StoppingForest, alpha_kappa_norm,
                             build_cz_energy_forest, carleson_constant, carleson_decay_check,
                             children_half_mass, compose_xdist, decay_profile,
                             stopping_data_report)
from artifact.instance import build, canonical_instances
from artifact.measure_grid import DyadicInterval as D, Grid
from artifact.suite import characteristic_reports

from conftest import instances, make

CANON = {name: inst for name, inst, _ in canonical_instances()}


def test_flat_forest_example():
    inst = CANON["flat_forest"]
    fo = build_cz_energy_forest(inst.pair, inst.f, 2.0, 10.0)
    assert fo.tops == [inst.grid.top]


def test_average_criterion_selects_spike():
    g = Grid(2, 6)
    tick = g.scale
    atoms = []
    for c in range(0, 63):
        x = (c + Fraction(1, 2)) * tick
        spike = 1 <= x < Fraction(3, 2)
        # uniform masses put the spike exactly at the factor 4 threshold
        atoms.append((x, Fraction(1 if spike else 2), Fraction(100) if spike else Fraction(1, 100)))
    inst = build(g, atoms, [((Fraction(127, 2)) * tick, Fraction(1), Fraction(1))])
    fo = build_cz_energy_forest(inst.pair, inst.f, 2.0, 1e9)
    spike = D(3, 2)  # [1, 3/2)
    assert any(F != g.top and g.contains(F, spike) for F in fo.tops)


def test_infinite_gamma_gives_root_only():
    inst = make(4, ns=8, nw=8)
    f = np.ones(len(inst.pair.sigma))
    fo = build_cz_energy_forest(inst.pair, f, 2.0, np.inf)
    infinite = [F for F in fo.tops if F != inst.grid.top]
    # only zero-sigma-mass triggers may survive an infinite Gamma
    for F in infinite:
        assert inst.pair.sigma.mass(inst.grid.lo(F), inst.grid.hi(F)) == 0


def _coronas_partition(fo):
    g = fo.grid
    seen = {}
    for F in fo.tops:
        for I in fo.corona(F):
            assert I not in seen
            seen[I] = F
    assert set(seen) == set(g.descendants(fo.root, include_self=True))


@settings(max_examples=25, deadline=None)
@given(instances(max_atoms=10))
def test_forest_invariants(inst):
    for p in (1.5, 3.0):
        fo = build_cz_energy_forest(inst.pair, inst.f, p, 2.0)
        g = inst.grid
        _coronas_partition(fo)
        for F in fo.tops:
            for G in fo.tops:
                assert g.contains(F, G) or g.contains(G, F) or g.disjoint(F, G)
            if F != fo.root:
                assert g.is_good(F)
        rep = stopping_data_report(fo, inst.f, inst.pair.sigma, p)
        assert rep["alpha_monotone"]
        assert rep["decay_ok"]
        if p >= 2:
            assert rep["reverse_ok"]


def test_single_top_report():
    inst = make(2, ns=10, nw=10)
    fo = StoppingForest(inst.grid, inst.grid.top, [], alpha={inst.grid.top: 1.5})
    rep = stopping_data_report(fo, inst.f, inst.pair.sigma, 2.0)
    assert rep["carleson_C0"] == 1
    assert np.isclose(rep["alpha_kappa"][0], rep["sum_alpha_p"])


def _decay_oracle(fo, mu):
    """Direct enumeration of n-th generation masses against 2^(-n / ceil(2 C0))."""
    g = fo.grid
    C0 = carleson_constant(fo, mu)
    N = ceil(2 * C0)
    for F in fo.tops:
        mF = float(mu.mass(g.lo(F), g.hi(F)))
        n = 0
        while True:
            gen = fo.generation(F, n)
            if not gen:
                break
            tot = sum(float(mu.mass(g.lo(G), g.hi(G))) for G in gen)
            if n >= N:
                assert tot <= 2 ** (-n / N) * mF * (1 + 1e-12)
            n += 1


@pytest.mark.parametrize("seed", range(8))
def test_carleson_decay(seed):
    inst = make(seed, ns=16, nw=16, masses="loguniform")
    fo = build_cz_energy_forest(inst.pair, inst.f, 2.0, 1.05)
    ok, _, C0, N = carleson_decay_check(fo, inst.pair.sigma)
    assert ok and N == ceil(2 * C0)
    _decay_oracle(fo, inst.pair.sigma)
    prof = decay_profile(fo, inst.pair.sigma, fo.root)
    assert prof[0] == pytest.approx(1.0)


def test_alpha_kappa_two_level_p4():
    inst = make(7, ns=16, nw=8)
    g = inst.grid
    mu = inst.pair.sigma
    F1 = D(1, 0)
    F2 = D(3, 1)
    fo = StoppingForest(g, g.top, [F1, F2], alpha={g.top: 1.0, F1: 2.0, F2: 3.0})
    # kappa = 0, p = 4: integral of (sum alpha^2 1_F)^2
    want = 0.0
    for x, m in zip(mu.positions, mu.masses):
        s = sum(a * a for F, a in fo.alpha.items() if g.lo(F) <= x < g.hi(F))
        want += float(m) * s ** 2
    assert np.isclose(alpha_kappa_norm(fo, mu, 4.0, 0), want)
    # kappa = 1 pairs each top with its children tops
    want1 = 0.0
    for x, m in zip(mu.positions, mu.masses):
        s = 0.0
        for F, a in fo.alpha.items():
            for G in fo.generation(F, 1):
                if g.lo(G) <= x < g.hi(G):
                    s += a * a
        want1 += float(m) * s ** 2
    assert np.isclose(alpha_kappa_norm(fo, mu, 4.0, 1), want1)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_forest_contract_with_large_gamma(seed, p):
    inst = make(seed, ns=12, nw=12)
    reps = characteristic_reports(inst.pair, p, restarts=2, seed=seed,
                                  names=["testing_scalar_local_forward", "energy"])
    Gamma = 8 * max(reps["energy"].value, reps["testing_scalar_local_forward"].value) * (1 + 1e-6) + 1e-9
    fo = build_cz_energy_forest(inst.pair, inst.f, p, Gamma)
    ok, bad = children_half_mass(fo, inst.pair.sigma)
    assert ok, bad
    assert stopping_energy(inst.pair, p, fo).value <= Gamma


def test_compose_xdist_trivial_inner():
    inst = make(1, ns=16, nw=8)
    fo = build_cz_energy_forest(inst.pair, inst.f, 2.0, 1.05)
    it = compose_xdist(fo, {})
    for Q in fo.tops:
        assert it.xdist[Q] == fo.depth_of(Q)


def test_compose_xdist_examples():
    g = Grid(6, 6)
    T = g.top
    outer = StoppingForest(g, T, [])
    inner = StoppingForest(g, T, [D(2, 1), D(4, 5), D(6, 21)])
    it = compose_xdist(outer, {T: inner})
    for B in inner.tops:
        assert it.xdist[B] == inner.depth_of(B)

    Q1, Q2 = D(1, 0), D(1, 1)
    outer = StoppingForest(g, T, [Q1, Q2])
    inner_T = StoppingForest(g, T, [])
    inner_Q1 = StoppingForest(g, Q1, [D(2, 0), D(3, 0)])
    inner_Q2 = StoppingForest(g, Q2, [D(3, 5)])
    it = compose_xdist(outer, {T: inner_T, Q1: inner_Q1, Q2: inner_Q2})
    assert it.depths == [1, 3]
    assert it.xdist[D(3, 5)] == 1 + 1
    assert it.xdist[D(3, 0)] == 1 + 2
    assert it.level_groups()[0] == [T]
    with pytest.raises(MismatchedTops):
        compose_xdist(outer, {T: StoppingForest(g, T, [D(2, 0)])})
    with pytest.raises(MismatchedTops):
        compose_xdist(outer, {D(2, 0): StoppingForest(g, D(2, 0), [])})


def test_compose_xdist_inner_depth_two_then_one():
    g = Grid(6, 6)
    T, Q1, Q2 = g.top, D(1, 0), D(1, 1)
    outer = StoppingForest(g, T, [Q1, Q2])
    # no proper top fits in the corona of T, so D_1 = 1; Q1 carries depth 2
    it = compose_xdist(outer, {Q1: StoppingForest(g, Q1, [D(2, 0), D(4, 0)]),
                               Q2: StoppingForest(g, Q2, [D(2, 3)])})
    assert it.depths == [1, 3]
    assert it.xdist[D(2, 3)] == 1 + 1
    assert it.xdist[D(4, 0)] == 1 + 2
    assert it.tuples[D(4, 0)] == (2, 1)



def test_compose_xdist_two_outer_children():
    g = Grid(6, 6)
    T, Q1, Q2 = g.top, D(2, 0), D(2, 3)
    outer = StoppingForest(g, T, [Q1, Q2])
    # D(2,1) lies in the corona of T, so the inner forest at T has two generations
    it = compose_xdist(outer, {T: StoppingForest(g, T, [D(2, 1)]),
                               Q1: StoppingForest(g, Q1, [D(3, 0)])})
    assert it.depths[0] == 2
    assert it.xdist[D(3, 0)] == 2 + 1
    assert it.xdist[Q2] == 2
