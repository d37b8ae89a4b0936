from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.dual_tree import (SeqMeasure, build_dual_stopping_times, check_sequence,
                                disjoint_additivity, geometric_decay_check, haar_support,
                                iterate_Sn, small_increment_bound, seq_norm, sharp_bound,
                                verify_dual_decay)
from artifact.haar import HaarSystem
from artifact.measure_grid import AtomicMeasure, DyadicInterval as D, Grid
from artifact.suite import perturbations, uniqueness_finding

from conftest import instances, make


def _nu(inst, p, support=None):
    g = inst.grid
    om = inst.pair.omega
    supp = HaarSystem(g, om).support_candidates() if support is None else support
    return SeqMeasure(g, om, supp, p)


def test_seq_norm_examples():
    g = Grid(2, 4, check=False)
    om = AtomicMeasure({Fraction(9, 4): 1, Fraction(11, 4): 1})
    nu = SeqMeasure(g, om, [D(2, 2)], 2.0)
    assert np.isclose(seq_norm(nu, D(2, 2)), 0.125)
    assert np.isclose(seq_norm(nu, g.top), 0.125)
    assert seq_norm(nu, D(1, 0)) == 0


@settings(max_examples=25, deadline=None)
@given(instances(max_atoms=12))
def test_seq_norm_parseval(inst):
    om = inst.pair.omega
    nu = _nu(inst, 2.0)
    for I in (inst.grid.top, D(1, 0), D(2, 3)):
        lo, hi = inst.grid.lo(I), inst.grid.hi(I)
        x = np.array([float(v) for v in om.positions])
        sel = np.array([lo <= v < hi for v in om.positions])
        if not sel.any():
            assert seq_norm(nu, I) == 0
            continue
        w = om.w[sel]
        dev = x[sel] - np.dot(x[sel], w) / w.sum()
        assert np.isclose(seq_norm(nu, I), float(np.sum(w * dev ** 2)), rtol=1e-9, atol=1e-12)


def test_singleton_is_irreducible():
    inst = make(3, ns=8, nw=12)
    J = HaarSystem(inst.grid, inst.pair.omega).support_candidates()[-1]
    nu = _nu(inst, 2.0, [J])
    seq = build_dual_stopping_times(nu, 2.0)
    assert seq.irreducible
    assert seq.levels == [[J], [inst.grid.top]]


def test_dominant_root_is_selected():
    g = Grid(2, 6)
    tick = g.scale
    # a tight pair near 0 and a far atom near 4: the root payload dominates
    om = AtomicMeasure({tick / 2: 1, 3 * tick / 2: 1, 4 - tick / 2: 1})
    nu = SeqMeasure(g, om, [D(5, 0), g.top], 2.0)
    seq = build_dual_stopping_times(nu, 2.0)
    assert not seq.irreducible
    assert seq.levels[0] == [D(5, 0)] and g.top in seq.new[1]


@pytest.mark.parametrize("seed", range(6))
def test_large_gamma_irreducible(seed):
    inst = make(seed, ns=8, nw=16)
    seq = build_dual_stopping_times(_nu(inst, 2.0), 1e12)
    assert seq.irreducible


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_dual_decay_and_geometric(seed, p):
    inst = make(seed, ns=8, nw=20, masses="loguniform" if seed % 2 else "unit")
    nu = _nu(inst, p)
    for Gamma in (1.1, 1.5, 2.0):
        seq = build_dual_stopping_times(nu, Gamma)
        rec = verify_dual_decay(seq, nu, Gamma)
        assert rec["ok"]
        if p < 2 and len(seq.levels) > 1:
            assert rec["small_increment"]
        ok, _ = geometric_decay_check(seq, nu, Gamma)
        assert ok
        assert check_sequence(seq.levels, nu, Gamma)


def test_sharp_bound_forms():
    assert sharp_bound(2.0, 2.0) == 3.0
    assert sharp_bound(1.5, 1.5) == max(2 ** 4.5 * (1.5 ** 1.5 - 1), 2 * (1.5 ** 1.5 - 1) ** 0.75)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 5), st.floats(0, 5), st.floats(0.01, 3)), min_size=1,
                max_size=12), st.sampled_from([1.2, 1.5, 1.8]))
def test_small_increment_explicit(rows, p):
    gg = np.array([r[0] for r in rows])
    bb = np.array([r[1] for r in rows])
    w = np.array([r[2] for r in rows])
    lhs, rhs = small_increment_bound(gg, bb, w, p)
    assert lhs <= rhs * (1 + 1e-9) + 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_disjoint_additivity(seed):
    inst = make(seed, ns=8, nw=20)
    nu = _nu(inst, 1.5)
    for k in (1, 2, 3):
        fam = [D(k, n) for n in range(1 << k)]
        a, b = disjoint_additivity(nu, fam)
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))


@pytest.mark.parametrize("seed", range(4))
def test_uniqueness_under_perturbation(seed):
    inst = make(seed, ns=6, nw=14)
    g = inst.grid
    supp = HaarSystem(g, inst.pair.omega).support_candidates()
    for p in (1.5, 2.0):
        f = uniqueness_finding(g, inst.pair.omega, supp, p, 1.1)
        assert f.ok, f.line()


def test_perturbation_rejection_direct():
    inst = make(11, ns=6, nw=16)
    nu = _nu(inst, 2.0)
    seq = build_dual_stopping_times(nu, 1.1)
    rebuilt = build_dual_stopping_times(nu, 1.1)
    assert rebuilt.levels == seq.levels
    count = 0
    for alt in perturbations(seq.levels, nu):
        if alt != seq.levels:
            assert not check_sequence(alt, nu, 1.1)
            count += 1
    assert count > 0


def test_haar_support_and_iteration_singleton():
    inst = make(5, ns=10, nw=10)
    g = inst.grid
    hw = HaarSystem(g, inst.pair.omega)
    J = hw.support_candidates()[0]
    h, _ = hw.haar_function(J)
    assert haar_support(g, inst.pair.omega, h, tol=1e-12) == [J]
    seqs, it = iterate_Sn(inst.pair, inst.f, h, 1.5)
    assert len(seqs) == 1 and len(it) == 1


@pytest.mark.parametrize("seed", range(5))
def test_iteration_stabilizes(seed):
    inst = make(seed, ns=10, nw=12)
    s = len(haar_support(inst.grid, inst.pair.omega, inst.g))
    seqs, _ = iterate_Sn(inst.pair, inst.f, inst.g, 1.1, n_max=s + 2)
    assert len(seqs) <= s + 1
    for a, b in zip(seqs, seqs[1:]):
        assert set(a.tops) < set(b.tops)
    big, _ = iterate_Sn(inst.pair, inst.f, inst.g, 1e12)
    assert len(big) == 1
