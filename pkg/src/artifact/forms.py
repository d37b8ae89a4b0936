"""Splitting <H_sigma f, g>_omega over pairs of Haar frequencies.

Every form is assembled from the cell kernel
    K(A, B) = sum_{x in A, y in B} omega(x) sigma(y) / (y - x),
(A an omega-side interval, B a sigma-side interval), read off a 2D prefix
table, so <H_sigma 1_B, Delta_J g>_omega = sum_{b = J-, J+} d_J^b K(b, B).
In rational mode the table holds exact rationals and every residual is 0.
"""
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .characteristics import LOWER
from .haar import HaarSystem, _vals
from .hilbert_ops import bilinear_form, kernel_matrix
from .measure_grid import CommonAtom

try:
    from gmpy2 import mpq as _Q
except ImportError:  # pragma: no cover
    _Q = Fraction

CATEGORIES = ("below", "above", "disj", "disj_dual", "comp", "comp_dual")


class NotAForestForF(ValueError):
    pass


class MissingCharacteristic(KeyError):
    pass


def classify_pair(I, J, grid):
    """Six-way category of the Haar pair (I on sigma, J on omega)."""
    tau = grid.tau
    if grid.contains(I, J):
        if J.k - I.k >= tau and grid.deep_in(J, I, tau):
            return "below"
        return "comp"
    if grid.contains(J, I):
        if I.k - J.k >= tau and grid.deep_in(I, J, tau):
            return "above"
        return "comp_dual"
    # ties (equal length) go to the disjoint form
    return "disj" if J.k >= I.k else "disj_dual"


def is_long(I, J, grid):
    """Disjoint pair at distance beyond the length of the larger interval."""
    big = I if I.k <= J.k else J
    return grid.tdist(I, J) > grid.tlen(big)


def form_value(pair, f, g, P):
    if not P:
        return 0.0
    return bilinear_form(pair, f, g, restrict=sorted(P))


class _CellKernel:
    def __init__(self, pair, exact):
        sig, om = pair.sigma, pair.omega
        if set(sig.positions) & set(om.positions):
            raise CommonAtom("measures share an atom")
        self.pair = pair
        ns, nw = len(sig), len(om)
        if exact:
            S = [[_Q(0)] * (ns + 1) for _ in range(nw + 1)]
            ys = [_Q(y) for y in sig.positions]
            ms = [_Q(m) for m in sig.masses]
            for i, (x, mw) in enumerate(zip(om.positions, om.masses)):
                x, mw = _Q(x), _Q(mw)
                row, prev, acc = S[i + 1], S[i], _Q(0)
                for j in range(ns):
                    acc += mw * ms[j] / (ys[j] - x)
                    row[j + 1] = prev[j + 1] + acc
            self.S = S
        else:
            A = kernel_matrix(sig, om) * om.w[:, None] if ns and nw else np.zeros((nw, ns))
            S = np.zeros((nw + 1, ns + 1))
            S[1:, 1:] = np.cumsum(np.cumsum(A, axis=0), axis=1)
            self.S = S.tolist()
        self._rs = _level_ranges(pair.grid, sig)
        self._rw = _level_ranges(pair.grid, om)

    def __call__(self, A, B):
        i0, i1 = self._rw[A[0]][A[1]]
        j0, j1 = self._rs[B[0]][B[1]]
        S = self.S
        return S[i1][j1] - S[i0][j1] - S[i1][j0] + S[i0][j0]


def _level_ranges(grid, mu):
    """[k][n] -> atom index range of interval (k, n)."""
    ticks = np.array([int(x / grid.scale) for x in mu.positions], dtype=np.int64)
    out = []
    for k in range(grid.L + 1):
        edges = np.arange((1 << k) + 1, dtype=np.int64) << (grid.L - k)
        idx = np.searchsorted(ticks, edges, side="left").tolist()
        out.append(list(zip(idx[:-1], idx[1:])))
    return out


@dataclass
class FormDecomposition:
    mode: str
    total: object
    forms: dict
    residuals: dict
    projection_gap: object = 0
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.total if name == "total" else self.forms[name]

    def max_relative_residual(self):
        scale = max(abs(float(self.total)), max((abs(float(v)) for v in self.forms.values()),
                                                default=0.0), 1e-300)
        return max((abs(float(r)) for r in self.residuals.values()), default=0.0) / scale


def _to_out(x, exact):
    if exact:
        return Fraction(int(x.numerator), int(x.denominator)) if _Q is not Fraction else x
    return float(x)


def _diffs(hs, vals, keep, exact):
    out = {}
    for Q, (a, b) in hs.differences(vals, keep).items():
        if a != 0 or b != 0:
            out[Q] = (_Q(a), _Q(b)) if exact else (float(a), float(b))
    return out


def _projected(hs, d, n, exact):
    """sum_Q Delta_Q f as atom values."""
    acc = [_Q(0)] * n if exact else np.zeros(n)
    g = hs.grid
    for Q, (a, b) in d.items():
        for child, v in zip(g.children(Q), (a, b)):
            i, j = hs.rng(child)
            for t in range(i, j):
                acc[t] += v
    return acc


def average_control(pair, f, forest, tol=1e-12):
    """Good intervals of each corona (tops excluded) keep the average of
    |f - E_F f| within 4 times its average over F."""
    g, sig = pair.grid, pair.sigma
    f = np.asarray(_vals(f), dtype=float)
    bad = []
    for F in forest.tops:
        lo, hi = sig.irange(g.lo(F), g.hi(F))
        m = sig.w[lo:hi]
        if m.sum() <= 0:
            continue
        dev = np.abs(f[lo:hi] - np.sum(f[lo:hi] * m) / m.sum())
        avgF = float(np.sum(dev * m) / m.sum())
        for I in forest.corona(F):
            if I == F or not g.is_good(I):
                continue
            a, b = sig.irange(g.lo(I), g.hi(I))
            mi = sig.w[a:b].sum()
            if mi > 0 and float(np.sum(dev[a - lo:b - lo] * sig.w[a:b]) / mi) > 4 * avgF * (1 + tol) + tol:
                bad.append((F, I))
    return bad


def decompose(pair, f, g, forest, exact=False, project=True, check_forest=True):
    """All named forms of <H_sigma f, g>_omega with their split residuals."""
    grid = pair.grid
    if check_forest:
        if forest.root != grid.top:
            raise NotAForestForF("the forest must be rooted at the top interval")
        bad = average_control(pair, f, forest)
        if bad:
            raise NotAForestForF(f"average control fails at {bad[0]}")
    K = _CellKernel(pair, exact)
    hs = HaarSystem(grid, pair.sigma, exact=exact)
    hw = HaarSystem(grid, pair.omega, exact=exact)
    fv = np.asarray(_vals(f), dtype=float)
    gv = np.asarray(_vals(g), dtype=float)
    if exact:
        fv = [Fraction(float(v)) for v in fv]
        gv = [Fraction(float(v)) for v in gv]
    keep_s = keep_w = None
    if project:
        cg = sorted(grid.child_good_set)
        keep_s, keep_w = cg, cg
    df = _diffs(hs, fv, keep_s, exact)
    dg = _diffs(hw, gv, keep_w, exact)
    zero = _Q(0) if exact else 0.0
    fp = _projected(hs, df, len(pair.sigma), exact)
    gp = _projected(hw, dg, len(pair.omega), exact)

    # total from the projected functions, independently of the cell table
    if exact:
        total = zero
        for x, mw, gx in zip(pair.omega.positions, pair.omega.masses, gp):
            if gx == 0:
                continue
            x = _Q(x)
            s = zero
            for y, ms, fy in zip(pair.sigma.positions, pair.sigma.masses, fp):
                if fy != 0:
                    s += fy * _Q(ms) / (_Q(y) - x)
            total += s * gx * _Q(mw)
        full = bilinear_form(pair, f, g) if len(pair.sigma) and len(pair.omega) else 0.0
        gap = full - float(total)
    else:
        if len(pair.sigma) and len(pair.omega):
            A = kernel_matrix(pair.sigma, pair.omega)
            total = float(np.sum((A @ fp) * gp * pair.omega.w))
            gap = float(np.sum((A @ fv) * gv * pair.omega.w)) - total
        else:
            total, gap = 0.0, 0.0

    memo = {}
    good = grid.good_set

    def good_g(J):
        return J in good

    def hJ(J, B):
        """<H_sigma 1_B, Delta_J g>_omega."""
        key = (J, B)
        got = memo.get(key)
        if got is None:
            a, b = dg[J]
            Ja, Jb = grid.children(J)
            got = memo[key] = a * K(Ja, B) + b * K(Jb, B)
        return got

    def dval(I, child):
        return df[I][0] if child.n % 2 == 0 else df[I][1]

    names = ["below", "above", "disj", "disj_dual", "comp", "comp_dual", "disj_long",
             "disj_mid", "disj_dual_long", "disj_dual_mid", "home", "neigh", "diag", "far",
             "para", "stop", "inter", "far_boundary", "para_good", "para_telescoped"]
    B = {n: zero for n in names}
    supp_f, supp_g = sorted(df), sorted(dg)
    for I in supp_f:
        Ia, Ib = grid.children(I)
        da, db = df[I]
        FI = forest.top_of(I)
        for J in supp_g:
            c = classify_pair(I, J, grid)
            v = da * hJ(J, Ia) + db * hJ(J, Ib)
            B[c] += v
            if c in ("disj", "disj_dual"):
                B[c + ("_long" if is_long(I, J, grid) else "_mid")] += v
            elif c == "below":
                IJ = grid.child_containing(I, J)
                th = grid.sibling(IJ)
                home = dval(I, IJ) * hJ(J, IJ)
                B["home"] += home
                B["neigh"] += dval(I, th) * hJ(J, th)
                if forest.top_of(J) == FI:
                    B["diag"] += home
                    para = dval(I, IJ) * hJ(J, FI)
                    B["para"] += para
                    if good_g(J):
                        B["para_good"] += para
                    # 1_{I_J} = 1_F - 1_{F \ I_J}
                    B["stop"] -= dval(I, IJ) * (hJ(J, FI) - hJ(J, IJ))
                else:
                    B["far"] += home

    tau = grid.tau
    sset = set(df)
    for F in forest.tops:
        C = set(forest.corona(F))
        Js = [J for J in supp_g if J in C]
        if not Js:
            continue
        above = [I for I in grid.ancestors(F) if I in sset]
        for J in Js:
            for I in above:
                IF = grid.child_containing(I, F)
                t = dval(I, IF) * hJ(J, IF)
                B["inter"] += t
                # pairs of the intertwining sum that are not tau-deeply embedded
                if J.k - I.k < tau or not grid.deep_in(J, I, tau):
                    B["far_boundary"] -= t
            # telescoped paraproduct: (E_{J*} f - E_F f) <H 1_F, Delta_J g>;
            # for good J the deep-embedding chain runs from F down to level J.k - tau
            if good_g(J) and J.k - F.k >= tau and hs.mass(F) > 0:
                star = None
                for k in range(J.k - tau + 1, F.k - 1, -1):
                    A = grid.ancestor(J, k)
                    if hs.mass(A) > 0:
                        star = A
                        break
                e = _expect(hs, fp, star, exact) - _expect(hs, fp, F, exact)
                B["para_telescoped"] += e * hJ(J, F)

    B["far_minus_inter"] = B["far"] - B["inter"]
    six = sum((B[c] for c in CATEGORIES), zero)
    res = {
        "six_way": total - six,
        "disj_split": B["disj"] - B["disj_long"] - B["disj_mid"],
        "disj_dual_split": B["disj_dual"] - B["disj_dual_long"] - B["disj_dual_mid"],
        "below_split": B["below"] - B["home"] - B["neigh"],
        "home_split": B["home"] - B["diag"] - B["far"],
        "diag_split": B["diag"] - B["para"] - B["stop"],
        "far_inter": B["far_minus_inter"] - B["far_boundary"],
        "para_telescoped": B["para_good"] - B["para_telescoped"],
    }
    return FormDecomposition(
        "rational" if exact else "float",
        _to_out(total, exact),
        {k: _to_out(v, exact) for k, v in B.items()},
        {k: _to_out(v, exact) for k, v in res.items()},
        gap,
        {"n_f": len(df), "n_g": len(dg), "n_tops": len(forest.tops)},
    )


def _expect(hs, vals, I, exact):
    i, j = hs.rng(I)
    m = hs.mass(I)
    if exact:
        s = _Q(0)
        for t in range(i, j):
            s += vals[t] * _Q(hs.m[t])
        return s / _Q(m)
    return float(np.sum(vals[i:j] * hs.m[i:j]) / m)


def category_pairs(pair, f, g, project=True):
    """{category: set of (I, J)} over the Haar supports."""
    grid = pair.grid
    keep = sorted(grid.child_good_set) if project else None
    df = _diffs(HaarSystem(grid, pair.sigma), _vals(f), keep, False)
    dg = _diffs(HaarSystem(grid, pair.omega), _vals(g), keep, False)
    out = {c: set() for c in CATEGORIES}
    for I in df:
        for J in dg:
            out[classify_pair(I, J, grid)].add((I, J))
    return out


def above_below_antisymmetry(pair, f, g):
    """(B_above(f, g) on (sigma, omega), -B_below(g, f) on (omega, sigma))."""
    cats = category_pairs(pair, f, g)
    above = form_value(pair, f, g, cats["above"])
    swapped = pair.swapped()
    mirror = {(J, I) for I, J in cats["above"]}
    return above, -form_value(swapped, g, f, mirror)


BOUNDS = (
    ("1", "comp", ("testing_quad_local_forward", "muckenhoupt_offset_quad_forward", "wbp")),
    ("2", "disj_long", ("muckenhoupt_triple_quad_forward",)),
    ("3", "disj_long", ("testing_quad_global_forward",)),
    ("4", "disj_mid", ("muckenhoupt_offset_quad_forward",)),
    ("5", "neigh", ("muckenhoupt_offset_quad_forward",)),
    ("6", "far", ("testing_quad_local_forward", "muckenhoupt_triple_quad_forward",
                  "muckenhoupt_punctured_scalar_forward")),
    ("7", "far", ("testing_quad_global_forward",)),
    ("8", "para", ("testing_quad_local_forward",)),
    ("9", "stop", ("testing_scalar_local_forward",)),
)


def required_characteristics():
    return sorted({n for _, _, names in BOUNDS for n in names})


def bound_report(decomp, reports, f_norm, g_norm):
    """One row per listed bound: |form| / (sum of characteristics * norms)."""
    rows = []
    for label, form, names in BOUNDS:
        missing = [n for n in names if n not in reports]
        if missing:
            raise MissingCharacteristic(missing[0])
        char = sum(float(reports[n].value) for n in names)
        val = abs(float(decomp.forms[form]))
        den = char * f_norm * g_norm
        if val == 0:
            ratio = 0.0
        elif den == 0:
            ratio = float("inf")
        else:
            ratio = val / den
        upper = any(reports[n].mode == LOWER for n in names)
        rows.append({"bound": label, "form": form, "characteristics": names, "form_value": val,
                     "characteristic_sum": char, "ratio": ratio,
                     "flags": ("upper_estimate",) if upper else ()})
    return rows
