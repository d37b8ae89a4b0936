"""Dual (bottom-up) stopping times for sequence-valued measures on a dyadic
tree, and the iteration of such stopping times inside coronas."""
from dataclasses import dataclass, field

import numpy as np

from .corona import StoppingForest, build_cz_energy_forest, compose_xdist
from .haar import HaarSystem, _vals


class SeqMeasure:
    """nu_Lambda: I -> (Delta_I^omega Z) for I in Lambda, on the tree of
    intervals below `root` (optionally restricted to `nodes`)."""

    def __init__(self, grid, omega, support, p, root=None, nodes=None):
        self.grid, self.omega, self.p = grid, omega, p
        self.root = grid.top if root is None else root
        hw = HaarSystem(grid, omega)
        diffs = hw.differences(omega.x)
        self.support = sorted(set(support))
        self.payload = {}
        for I in self.support:
            if I in diffs:
                d = np.asarray(hw.delta(omega.x, I, diffs), dtype=float)
                if np.any(d):
                    self.payload[I] = d
        self.nodes = None if nodes is None else frozenset(nodes)
        self._cache = {}

    def in_tree(self, I):
        if not self.grid.contains(self.root, I):
            return False
        return self.nodes is None or I in self.nodes

    def norm_of(self, members):
        """int (sum_{J in members} |Delta_J Z|^2)^{p/2} domega."""
        sq = np.zeros(len(self.omega))
        for J in members:
            d = self.payload.get(J)
            if d is not None:
                sq += d * d
        return float(np.sum(self.omega.w * sq ** (self.p / 2)))

    def below(self, I, strict=False):
        g = self.grid
        return [J for J in self.payload if g.contains(I, J) and not (strict and J == I)]

    def seq_norm(self, I):
        got = self._cache.get(I)
        if got is None:
            got = self.norm_of(self.below(I))
            self._cache[I] = got
        return got


def seq_norm(nu, I):
    return nu.seq_norm(I)


@dataclass
class StoppingSequence:
    levels: list
    new: list
    Gamma: float
    irreducible: bool
    root: object
    meta: dict = field(default_factory=dict)


def _minimal(grid, items):
    items = sorted(set(items))
    return [I for I in items if not any(J != I and grid.contains(I, J) for J in items)]


def _strict_ancestors(nu, I):
    g = nu.grid
    return [A for A in g.ancestors(I) if nu.in_tree(A)]


def build_dual_stopping_times(nu, Gamma, p=None):
    """T_0 = minimal support elements; T_{n+1} = the minimal tree elements a that
    strictly contain some element of T_n and satisfy
        ||I* nu(a)||^p > Gamma^p sum_{b in T_n, b strictly inside a} ||I* nu(b)||^p,
    together with the elements of T_n not covered by them.  The last level is
    {root}."""
    g = nu.grid
    p = nu.p if p is None else p
    thr = Gamma ** p
    T = _minimal(g, nu.payload)
    levels, new = [T], [set(T)]
    while True:
        cur = levels[-1]
        cand = sorted({A for b in cur for A in _strict_ancestors(nu, b)})
        qual = []
        for A in cand:
            inside = [b for b in cur if g.contains(A, b) and b != A]
            s = sum(nu.seq_norm(b) for b in inside)
            if nu.seq_norm(A) > thr * s:
                qual.append(A)
        sel = _minimal(g, qual)
        if not sel:
            break
        carried = [b for b in cur if not any(g.contains(A, b) for A in sel)]
        levels.append(sorted(sel + carried))
        new.append(set(sel))
    irreducible = len(levels) == 1
    if levels[-1] != [nu.root]:
        levels.append([nu.root])
        new.append(set())
    return StoppingSequence(levels, new, Gamma, irreducible, nu.root)


def check_sequence(levels, nu, Gamma, p=None):
    """True iff `levels` is the sequence characterised by the stopping rule:
    minimal support start, criterion and minimality at every new element,
    exact carry-over, no further qualifying element, root at the end."""
    g = nu.grid
    p = nu.p if p is None else p
    thr = Gamma ** p
    if not levels or sorted(levels[0]) != _minimal(g, nu.payload):
        return False
    if sorted(levels[-1]) != [nu.root]:
        return False

    def qualifies(A, cur):
        inside = [b for b in cur if g.contains(A, b) and b != A]
        return bool(inside) and nu.seq_norm(A) > thr * sum(nu.seq_norm(b) for b in inside)

    def candidates(cur):
        return {A for b in cur for A in _strict_ancestors(nu, b)}

    def rule_step(prev):
        cand = candidates(prev)
        minimal = _minimal(g, [B for B in cand if qualifies(B, prev)])
        if not minimal:
            return None
        carried = [b for b in prev if not any(g.contains(A, b) for A in minimal)]
        return sorted(minimal + carried)

    levels = [sorted(T) for T in levels]
    for n in range(1, len(levels)):
        step = rule_step(levels[n - 1])
        if step == levels[n]:
            continue
        # only the closing {root} may be appended once nothing qualifies, and only once
        if n == len(levels) - 1 and step is None and levels[n - 1] != [nu.root]:
            continue
        return False
    if len(levels) > 1 and rule_step(levels[-1]) is not None:
        return False
    if len(levels) == 1 and levels[0] != [nu.root]:
        return False
    return True


def sharp_bound(Gamma, p):
    theta = Gamma ** p - 1
    if p >= 2:
        return theta
    return max(2 ** (p + 3) * theta, 2 * theta ** (p / 2))


def small_increment_bound(g, b, w, p, eta=0.5):
    """Both sides of the explicit form of the small-increment lemma:
    int b^p / int g^p <= max{eta^(-p-3) r, (r)^(p/2) / (1 - eta)}, with
    r = (int (g^2+b^2)^{p/2} - int g^p) / int g^p.  Returns (lhs, rhs)."""
    G = float(np.sum(w * g ** p))
    if G == 0:
        return 0.0, np.inf
    lam = float(np.sum(w * (g * g + b * b) ** (p / 2))) - G
    r = max(lam, 0.0) / G
    lhs = float(np.sum(w * b ** p)) / G
    return lhs, max(eta ** (-p - 3) * r, r ** (p / 2) / (1 - eta))


def _split(nu, gamma, prev):
    """(g, b) pointwise l2 sizes of the part of I* nu(gamma) below T_{n-1} and
    of the rest."""
    g = nu.grid
    gsq = np.zeros(len(nu.omega))
    bsq = np.zeros(len(nu.omega))
    for J, d in nu.payload.items():
        if not g.contains(gamma, J):
            continue
        if any(g.contains(b, J) for b in prev):
            gsq += d * d
        else:
            bsq += d * d
    return np.sqrt(gsq), np.sqrt(bsq)


def verify_dual_decay(seq, nu, Gamma, p=None):
    g = nu.grid
    p = nu.p if p is None else p
    bound = sharp_bound(Gamma, p)
    rows, small_rows = [], []
    ok = True
    for n in range(1, len(seq.levels)):
        prev = seq.levels[n - 1]
        for A in seq.levels[n]:
            if A in prev:
                continue  # carried over
            inside = [b for b in prev if g.contains(A, b) and b != A]
            G = sum(nu.seq_norm(b) for b in inside)
            B = nu.norm_of([J for J in nu.below(A, strict=True)
                            if not any(g.contains(b, J) for b in prev)])
            ratio = B / G if G > 0 else (0.0 if B == 0 else np.inf)
            line = "root" if n == len(seq.levels) - 1 and A == seq.root and A not in seq.new[n] else "alpha"
            good = ratio <= bound * (1 + 1e-12) + 1e-15
            rows.append({"n": n, "node": A, "line": line, "ratio": ratio, "bound": bound, "ok": good})
            ok = ok and good
            # gamma line: tree nodes strictly inside A, not inside any T_{n-1} element
            for C in nu.grid.descendants(A, include_self=False):
                if not nu.in_tree(C) or any(g.contains(b, C) for b in prev):
                    continue
                ins = [b for b in prev if g.contains(C, b) and b != C]
                Gc = sum(nu.seq_norm(b) for b in ins)
                if Gc == 0:
                    continue
                Bc = nu.norm_of([J for J in nu.below(C, strict=True)
                                 if not any(g.contains(b, J) for b in prev)])
                good = Bc / Gc <= bound * (1 + 1e-12) + 1e-15
                rows.append({"n": n, "node": C, "line": "gamma", "ratio": Bc / Gc, "bound": bound,
                             "ok": good})
                ok = ok and good
            if p < 2 and A.k < g.L:
                for C in g.children(A):
                    gg, bb = _split(nu, C, prev)
                    lhs, rhs = small_increment_bound(gg, bb, nu.omega.w, p)
                    good = lhs <= rhs * (1 + 1e-12) + 1e-15
                    small_rows.append({"node": C, "lhs": lhs, "rhs": rhs, "ok": good})
                    ok = ok and good
    return {"ok": ok, "rows": rows, "small_increment": small_rows, "bound": bound}


def stopping_tree_generations(seq, nu, n, A, m):
    """m-th generation below node (n, A): children of (k, B) are the elements
    of T_{k-1} strictly inside B."""
    g = nu.grid
    gen = [(n, A)]
    for _ in range(m):
        nxt = []
        for k, B in gen:
            if k == 0:
                continue
            nxt.extend((k - 1, b) for b in seq.levels[k - 1] if g.contains(B, b) and b != B)
        gen = nxt
    return [B for _, B in gen]


def geometric_decay_check(seq, nu, Gamma, p=None):
    """sum over the m-th generation of ||I* nu||^p <= Gamma^(-pm) ||I* nu(A)||^p
    for every selected (non-root-appended) node A."""
    p = nu.p if p is None else p
    ok, worst = True, 0.0
    for n in range(1, len(seq.levels)):
        for A in seq.new[n]:
            top = nu.seq_norm(A)
            for m in range(1, n + 1):
                s = sum(nu.seq_norm(B) for B in stopping_tree_generations(seq, nu, n, A, m))
                lhs = s * Gamma ** (p * m)
                if top > 0:
                    worst = max(worst, lhs / top)
                ok = ok and lhs <= top * (1 + 1e-12)
    return ok, worst


def disjoint_additivity(nu, family):
    """(||sum_{b in family} I* nu(b)||^p, sum_b ||I* nu(b)||^p) for an
    antichain `family`."""
    members = [J for b in family for J in nu.below(b)]
    return nu.norm_of(members), sum(nu.seq_norm(b) for b in family)


def haar_support(grid, mu, g, tol=None):
    """Non-degenerate Q where g has a child jump above tol (default: 1e-12
    relative to max |g|, which absorbs float residue from cancellation)."""
    hw = HaarSystem(grid, mu)
    vals = np.asarray(_vals(g), dtype=float)
    if tol is None:
        tol = 1e-12 * float(np.max(np.abs(vals), initial=0.0))
    out = []
    for Q, (dm, dp) in hw.differences(vals).items():
        if abs(dm) > tol or abs(dp) > tol:
            out.append(Q)
    return sorted(out)


def iterate_Sn(pair, f, g, Gamma, n_max=8, p=2.0, Gamma_cz=None, forest=None):
    """S^(0) = CZ/energy forest of f; S^(n+1) adds, inside every S^(n) corona,
    the new dual stopping times of nu restricted to the Haar support of g."""
    grid = pair.grid
    if forest is None:
        forest = build_cz_energy_forest(pair, f, p, Gamma if Gamma_cz is None else Gamma_cz)
    supp = haar_support(grid, pair.omega, g)
    seqs = [forest]
    iterated = []
    for _ in range(n_max):
        S = seqs[-1]
        inner, added = {}, []
        for A in S.tops:
            cor = S.corona(A)
            cset = set(cor)
            lam = [J for J in supp if J in cset]
            nu = SeqMeasure(grid, pair.omega, lam, p, root=A, nodes=cset)
            seq = build_dual_stopping_times(nu, Gamma, p)
            tops = sorted(set().union(*seq.new[1:]) - {A}) if len(seq.new) > 1 else []
            inner[A] = StoppingForest(grid, A, tops)
            added.extend(tops)
        iterated.append(compose_xdist(S, inner))
        if not added:
            break
        seqs.append(StoppingForest(grid, S.root, S.tops + added, S.alpha))
    return seqs, iterated
