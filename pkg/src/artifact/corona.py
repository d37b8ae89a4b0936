"""Stopping forests: the Calderon-Zygmund / energy stopping times, stopping
data diagnostics and iterated coronas."""
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil

import numpy as np

from .characteristics import _EnergyTables, _safe_ratio


class GammaTooSmall(RuntimeError):
    pass


class MismatchedTops(ValueError):
    pass


class StoppingForest:
    """A set of tops below a root; coronas C(F) = intervals in F not inside a
    smaller top."""

    def __init__(self, grid, root, tops, alpha=None, flags=()):
        self.grid = grid
        self.root = root
        tops = set(tops) | {root}
        for F in tops:
            if not grid.contains(root, F):
                raise ValueError(f"top {F} is not inside the root {root}")
        self.tops = sorted(tops)
        self._set = frozenset(tops)
        self.alpha = dict(alpha or {})
        self.flags = tuple(flags)
        self._top_of = {}

    def __contains__(self, F):
        return F in self._set

    def __len__(self):
        return len(self.tops)

    def top_of(self, I):
        """Smallest top containing I, or None outside the root."""
        got = self._top_of.get(I)
        if got is None and I not in self._top_of:
            got = None
            if self.grid.contains(self.root, I):
                for k in range(I.k, self.root.k - 1, -1):
                    A = self.grid.ancestor(I, k)
                    if A in self._set:
                        got = A
                        break
            self._top_of[I] = got
        return got

    def parent_top(self, F):
        return F if F == self.root else self.top_of(self.grid.parent(F))

    def children_tops(self, F):
        return [G for G in self.tops if G != F and self.parent_top(G) == F]

    def generation(self, F, n):
        """n-th generation forest descendants of F."""
        gen = [F]
        for _ in range(n):
            gen = [G for H in gen for G in self.children_tops(H)]
        return gen

    def depth_of(self, F):
        """Forest distance from the root."""
        d = 0
        while F != self.root:
            F = self.parent_top(F)
            d += 1
        return d

    def corona(self, F):
        g = self.grid
        out, stack = [], [F]
        while stack:
            I = stack.pop()
            out.append(I)
            if I.k < g.L:
                stack.extend(c for c in g.children(I) if c not in self._set)
        return sorted(out)


def _proj_abs(sig, lo, hi, f):
    """|P_{D[I]} f| = |f - E_I f| on the atoms [lo, hi) of I (zero mass gives 0)."""
    m = sig.w[lo:hi]
    if m.sum() <= 0:
        return np.zeros(hi - lo)
    return np.abs(f[lo:hi] - np.sum(f[lo:hi] * m) / m.sum())


def build_cz_energy_forest(pair, f, p, Gamma, T=None, max_steps=None):
    """Energy / average stopping times for f, with alpha values."""
    g = pair.grid
    T = g.top if T is None else T
    sig = pair.sigma
    f = np.asarray(getattr(f, "values", f), dtype=float)
    tab = _EnergyTables(pair, p)
    thr = np.inf if Gamma == np.inf else Gamma ** p
    max_steps = max_steps if max_steps is not None else (g.L + 1) * (1 << g.L)
    tops, parent = [T], {T: T}
    frontier, steps, flags = [T], 0, []
    while frontier:
        nxt = []
        for I in frontier:
            lo, hi = sig.irange(g.lo(I), g.hi(I))
            pf = _proj_abs(sig, lo, hi, f)
            mI = sig.w[lo:hi].sum()
            avgI = float(np.sum(pf * sig.w[lo:hi]) / mI) if mI > 0 else 0.0
            stack = list(g.children(I)) if I.k < g.L else []
            while stack:
                J = stack.pop()
                steps += 1
                if steps > max_steps:
                    raise GammaTooSmall("stopping recursion did not terminate")
                if g.is_good(J):
                    e = _safe_ratio(tab.term(J, I), tab.ms[J])
                    a, b = sig.irange(g.lo(J), g.hi(J))
                    avgJ = _safe_ratio(float(np.sum(pf[a - lo:b - lo] * sig.w[a:b])), tab.ms[J])
                    if e > thr or avgJ > 4 * avgI:
                        if tab.ms[J] == 0:
                            flags.append(("zero_sigma_top", J))
                        nxt.append(J)
                        parent[J] = I
                        continue
                if J.k < g.L:
                    stack.extend(g.children(J))
        tops.extend(nxt)
        frontier = nxt
    alpha = {}
    for F in sorted(tops, key=lambda F: F.k):
        lo, hi = sig.irange(g.lo(F), g.hi(F))
        plo, phi = sig.irange(g.lo(parent[F]), g.hi(parent[F]))
        pf = _proj_abs(sig, plo, phi, f)
        mF = sig.w[lo:hi].sum()
        own = float(np.sum(pf[lo - plo:hi - plo] * sig.w[lo:hi]) / mF) if mF > 0 else 0.0
        alpha[F] = own if F == T else max(own, alpha[parent[F]])
    return StoppingForest(g, T, tops, alpha, flags)


def _exact_mass(mu, g, I):
    return mu.mass(g.lo(I), g.hi(I))


def carleson_constant(forest, mu):
    """C_0 = sup_F sum_{F' subset F} |F'|_mu / |F|_mu, exact."""
    g = forest.grid
    best = Fraction(0)
    for F in forest.tops:
        mF = _exact_mass(mu, g, F)
        if mF == 0:
            continue
        tot = sum((_exact_mass(mu, g, G) for G in forest.tops if g.contains(F, G)), Fraction(0))
        best = max(best, tot / mF)
    return best


def decay_profile(forest, mu, F):
    """[beta_n(F)/|F|_mu for n = 0, 1, ...] exactly."""
    g = forest.grid
    mF = _exact_mass(mu, g, F)
    out, n = [], 0
    while True:
        gen = forest.generation(F, n)
        if not gen:
            break
        if mF > 0:
            out.append(sum((_exact_mass(mu, g, G) for G in gen), Fraction(0)) / mF)
        n += 1
    return out


def carleson_decay_check(forest, mu):
    """beta_n(F) <= 2^(-n/N) |F|_mu for n >= N = ceil(2 C_0): (ok, worst margin)."""
    C0 = carleson_constant(forest, mu)
    N = max(1, ceil(2 * C0))
    ok, worst = True, None
    for F in forest.tops:
        for n, b in enumerate(decay_profile(forest, mu, F)):
            if n < N:
                continue
            # b <= 2^(-n/N)  <=>  b^N <= 2^(-n), exact in rationals
            slack = Fraction(1, 2 ** n) - b ** N
            ok = ok and slack >= 0
            worst = slack if worst is None else min(worst, slack)
    return ok, worst, C0, N


def alpha_kappa_norm(forest, mu, p, kappa):
    """int (sum_F alpha(F)^2 1_{F^kappa})^{p/2} dmu."""
    g = forest.grid
    S = np.zeros(len(mu))
    for F in forest.tops:
        a = forest.alpha.get(F, 0.0)
        for G in forest.generation(F, kappa):
            i, j = mu.irange(g.lo(G), g.hi(G))
            S[i:j] += a * a
    return float(np.sum(mu.w * S ** (p / 2)))


def stopping_data_report(forest, f, mu, p, kappa_max=3):
    g = forest.grid
    f = np.asarray(getattr(f, "values", f), dtype=float)
    absf = np.abs(f)
    cond1 = 0.0
    for F in forest.tops:
        aF = forest.alpha.get(F, 0.0)
        for I in forest.corona(F):
            i, j = mu.irange(g.lo(I), g.hi(I))
            m = mu.w[i:j].sum()
            if m > 0:
                cond1 = max(cond1, _safe_ratio(float(np.sum(absf[i:j] * mu.w[i:j]) / m), aF))
    C0 = carleson_constant(forest, mu)
    fp = float(np.sum(mu.w * absf ** p))
    sum_ap = sum(forest.alpha.get(F, 0.0) ** p * float(_exact_mass(mu, g, F)) for F in forest.tops)
    S = np.zeros(len(mu))
    for F in forest.tops:
        i, j = mu.irange(g.lo(F), g.hi(F))
        S[i:j] += forest.alpha.get(F, 0.0)
    qorth = float(np.sum(mu.w * S ** p))
    mono = all(forest.alpha.get(forest.parent_top(F), 0.0) <= forest.alpha.get(F, 0.0)
               for F in forest.tops)
    decay_ok, decay_worst, _, N = carleson_decay_check(forest, mu)
    kappa = [alpha_kappa_norm(forest, mu, p, k) for k in range(kappa_max + 1)]
    reverse_ok = None
    if p >= 2:
        reverse_ok = kappa[0] >= sum_ap * (1 - 1e-12)
    return {
        "cond1_max_ratio": cond1,
        "carleson_C0": C0,
        "quasi_orth_ratio": _safe_ratio(sum_ap, fp),
        "q_orth_ratio": _safe_ratio(qorth, fp),
        "alpha_monotone": mono,
        "decay_profile": {F: decay_profile(forest, mu, F) for F in forest.tops},
        "decay_N": N,
        "decay_ok": decay_ok,
        "decay_worst_slack": decay_worst,
        "alpha_kappa": kappa,
        "alpha_kappa_ratio": [_safe_ratio(v, sum_ap) for v in kappa],
        "sum_alpha_p": sum_ap,
        "reverse_ok": reverse_ok,
    }


def children_half_mass(forest, mu):
    """For every top: sum of child-top masses <= half its mass (exact)."""
    g = forest.grid
    bad = []
    for F in forest.tops:
        ch = sum((_exact_mass(mu, g, G) for G in forest.children_tops(F)), Fraction(0))
        if 2 * ch > _exact_mass(mu, g, F):
            bad.append(F)
    return not bad, bad


@dataclass
class IteratedForest:
    outer: StoppingForest
    inner: dict
    xdist: dict
    depths: list
    tuples: dict = field(default_factory=dict)

    def level_groups(self):
        groups = {}
        for A, t in self.xdist.items():
            groups.setdefault(t, []).append(A)
        return {t: sorted(v) for t, v in sorted(groups.items())}


def compose_xdist(outer, inner):
    """Iterated distance: xdist(A) = D_1 + ... + D_m + dist_{A[Q]}(A, Q) for
    Q in the m-th outer generation (m counted from 0 at the root), where
    D_k is the largest number of generations of an inner forest at outer
    generation k - 1."""
    g = outer.grid
    inner = dict(inner)
    for Q in outer.tops:
        A = inner.setdefault(Q, StoppingForest(g, Q, [Q]))
        if A.root != Q:
            raise MismatchedTops(f"inner forest rooted at {A.root}, expected {Q}")
        for B in A.tops:
            if outer.top_of(B) != Q:
                raise MismatchedTops(f"inner top {B} leaves the corona of {Q}")
    for Q in inner:
        if Q not in outer:
            raise MismatchedTops(f"{Q} is not an outer top")
    gen = {Q: outer.depth_of(Q) for Q in outer.tops}
    nd = {Q: max(inner[Q].depth_of(B) for B in inner[Q].tops) + 1 for Q in outer.tops}
    depths = [max(nd[Q] for Q in outer.tops if gen[Q] == m) for m in range(max(gen.values()) + 1)]
    xdist, tuples = {}, {}
    for Q in outer.tops:
        base = sum(depths[:gen[Q]])
        for B in inner[Q].tops:
            d1 = inner[Q].depth_of(B)
            xdist[B] = base + d1
            tuples[B] = (d1, gen[Q])
    return IteratedForest(outer, inner, xdist, depths, tuples)
