from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from artifact.measure_grid import (AtomicMeasure, CommonAtom, DyadicInterval as D, Grid,
                                   InvalidGrid, MeasurePair, OutOfGrid, mass)


def test_navigate_examples():
    g = Grid(3, 3, r=0, check=False)
    assert g.navigate(D(3, 2), "parent") == D(2, 1)          # [2,3) -> [2,4)
    assert g.navigate(D(2, 0), "left_child") == D(3, 0)      # [0,2) -> [0,1)
    with pytest.raises(OutOfGrid):
        g.navigate(g.top, "parent")
    with pytest.raises(OutOfGrid):
        g.children(D(3, 0))


def test_mass_examples():
    s = AtomicMeasure({Fraction(1, 2): 1, Fraction(5, 2): 1})
    assert mass(s, 0, 4) == 2
    assert mass(s, 4, 8) == 0
    assert mass(s, Fraction(1, 2), Fraction(5, 2)) == 1


def test_deep_in_examples():
    g = Grid(3, 3, r=2, eps=Fraction(1, 8), check=False)
    assert not g.deep_in(D(3, 3), g.top, r=2, eps=Fraction(1, 8))
    assert g.deep_in(D(3, 3), g.top, r=2, eps=Fraction(1, 4))
    assert g.is_good(g.top)


def test_grid_invariants_rejected():
    with pytest.raises(InvalidGrid):
        Grid(6, 6, r=3, eps=Fraction(1, 4))
    with pytest.raises(InvalidGrid):
        Grid(5, 5, r=3)
    with pytest.raises(InvalidGrid):
        Grid(6, 6, r=3, tau=3)


def test_common_atom_rejected():
    g = Grid(2, 4, check=False)
    with pytest.raises(CommonAtom):
        MeasurePair(AtomicMeasure({1: 1}), AtomicMeasure({1: 2}), g)


@given(st.integers(1, 8), st.data())
def test_navigation_round_trips(k, data):
    g = Grid(8, 8)
    n = data.draw(st.integers(0, (1 << k) - 1))
    I = D(k, n)
    assert g.sibling(g.sibling(I)) == I
    if k < g.L:
        a, b = g.children(I)
        assert g.parent(a) == I and g.parent(b) == I
        assert g.lo(a) == g.lo(I) and g.hi(a) == g.lo(b) and g.hi(b) == g.hi(I)


@given(st.lists(st.tuples(st.integers(0, 63), st.integers(1, 9)), unique_by=lambda t: t[0]),
       st.integers(0, 64), st.integers(0, 64), st.integers(0, 64))
def test_mass_additive(atoms, a, b, c):
    a, b, c = sorted((a, b, c))
    mu = AtomicMeasure([(Fraction(x, 1) + Fraction(1, 2), m) for x, m in atoms])
    assert mu.mass(a, b) + mu.mass(b, c) == mu.mass(a, c)


def _deep_oracle(g, J, I, r, eps):
    """dist(J, dI) >= 1/2 l(J)^eps l(I)^(1-eps), with real lengths, by 8th powers."""
    if not g.contains(I, J) or g.length(J) > g.length(I) / 2 ** r:
        return False
    d = min(g.lo(J) - g.lo(I), g.hi(I) - g.hi(J))
    b = eps.denominator
    return (2 * d) ** b >= g.length(J) ** eps.numerator * g.length(I) ** (b - eps.numerator)


@pytest.mark.parametrize("L", [6, 7, 8])
def test_goodness_against_definition(L):
    g = Grid(L, L)
    for J in g.all_intervals():
        sup = g.ancestors(J)
        want = all(g.length(J) >= g.length(I) / 2 ** g.r or _deep_oracle(g, J, I, g.r, g.eps)
                   for I in sup)
        assert g.is_good(J) == want
        if want:
            # at l(J) = 2^-r l(I) the size branch already holds
            for I in sup:
                if g.length(J) < g.length(I) / 2 ** g.r:
                    assert g.deep_in(J, I)


def whitney_oracle(g, F, r, eps):
    """Maximal W strictly inside F with the deep property, by exhaustive search."""
    cand = [W for W in g.descendants(F, include_self=False) if _deep_oracle(g, W, F, r, eps)]
    cs = set(cand)
    return sorted((W for W in cand if not any(A in cs for A in g.ancestors(W))), key=g.tlo)


@pytest.mark.parametrize("L", [5, 6, 7, 8])
def test_whitney_deep_matches_exhaustive(L):
    g = Grid(L, L, r=2, eps=Fraction(1, 4), check=False)
    for F in g.levels(0, 2):
        got = g.whitney(F, "deep")
        assert got == whitney_oracle(g, F, 2, Fraction(1, 4))
        for i, A in enumerate(got):
            assert all(g.disjoint(A, B) for B in got[i + 1:])


def test_whitney_nearby_and_empty():
    g = Grid(3, 6, r=3, check=False)
    near = g.whitney(g.top, "nearby_tau")
    assert set(near) == {J for J in g.all_intervals() if g.length(J) >= g.length(g.top) / 2 ** g.tau}
    deepest = D(g.L - g.r + 1, 0)
    assert g.whitney(deepest, "deep") == []


def test_whitney_good_families_are_disjoint_and_valid():
    g = Grid(7, 7)
    for F in g.levels(0, 2):
        for kind in ("good_trip", "good_tau"):
            fam = g.whitney(F, kind)
            for i, A in enumerate(fam):
                assert g.is_good(A) and g.contains(F, A)
                assert all(g.disjoint(A, B) for B in fam[i + 1:])
