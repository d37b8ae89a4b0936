"""Operator norm and the testing, Muckenhoupt, weak boundedness and energy
characteristics of a measure pair.

Suprema over finitely many intervals are computed exactly.  Quadratic
characteristics are suprema over sequences of coefficients; they are estimated
from below by seeded multi-start ascent and labelled ``lower_bound``.
"""
import heapq
import itertools
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .ascent import QuadRatio, maximize, one_hot, random_starts
from .haar import HaarSystem, _vals, lp_norm
from .hilbert_ops import kernel_matrix
from .measure_grid import DyadicInterval

EXACT = "exact"
LOWER = "lower_bound"


class TooLarge(ValueError):
    pass


class NotCarleson(ValueError):
    pass


class ZeroDenominator(ZeroDivisionError):
    pass


@dataclass
class CharacteristicReport:
    name: str
    p: float
    value: float
    mode: str
    witness: object = None
    meta: dict = field(default_factory=dict)
    flags: tuple = ()


def conj(p):
    return p / (p - 1.0)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# -- interval bookkeeping --------------------------------------------------------
class _Family:
    """A list of intervals [a, b) (real endpoints) with atom index ranges."""

    def __init__(self, pair, labels, ends):
        self.labels = labels
        self.a = [e[0] for e in ends]
        self.b = [e[1] for e in ends]
        self.length = np.array([float(b - a) for a, b in ends])
        sp, wp = pair.sigma.positions, pair.omega.positions
        self.si = np.array([bisect_left(sp, a) for a in self.a], dtype=int)
        self.sj = np.array([bisect_left(sp, b) for b in self.b], dtype=int)
        self.wi = np.array([bisect_left(wp, a) for a in self.a], dtype=int)
        self.wj = np.array([bisect_left(wp, b) for b in self.b], dtype=int)
        cs = np.concatenate([[0.0], np.cumsum(pair.sigma.w)])
        cw = np.concatenate([[0.0], np.cumsum(pair.omega.w)])
        self.ms = cs[self.sj] - cs[self.si]
        self.mw = cw[self.wj] - cw[self.wi]

    def __len__(self):
        return len(self.labels)


def dyadic_family(pair):
    g = pair.grid
    ivs = g.all_intervals()
    return _Family(pair, ivs, [(g.lo(I), g.hi(I)) for I in ivs])


def lattice_family(pair):
    """All intervals with endpoints on the level-L lattice (tick pairs)."""
    g = pair.grid
    if g.L > 6:
        raise TooLarge("exhaustive interval mode is limited to L <= 6")
    n = 1 << g.L
    labels = [(a, b) for a in range(n) for b in range(a + 1, n + 1)]
    return _Family(pair, labels, [(a * g.scale, b * g.scale) for a, b in labels])


def _family(pair, intervals):
    if intervals == "dyadic":
        return dyadic_family(pair)
    if intervals == "exhaustive":
        return lattice_family(pair)
    raise ValueError(f"unknown interval mode {intervals!r}")


def _hilbert_indicators(pair, fam):
    """Column k = H_sigma 1_{I_k} at the omega atoms."""
    if len(pair.omega) == 0 or len(pair.sigma) == 0:
        return np.zeros((len(pair.omega), len(fam)))
    A = kernel_matrix(pair.sigma, pair.omega)
    C = np.concatenate([np.zeros((A.shape[0], 1)), np.cumsum(A, axis=1)], axis=1)
    return C[:, fam.sj] - C[:, fam.si]


def _indicator(n_atoms, lo, hi):
    M = np.zeros((n_atoms, len(lo)))
    for k, (i, j) in enumerate(zip(lo, hi)):
        M[i:j, k] = 1.0
    return M


def _safe_ratio(num, den):
    """num/den with 0/0 = 0 and positive/0 = inf."""
    if den > 0:
        return num / den
    return np.inf if num > 0 else 0.0


# -- operator norm ---------------------------------------------------------------
def weighted_matrix(pair, p):
    """W with ||H_sigma f||_{L^p(omega)} / ||f||_{L^p(sigma)} = ||W u||_p / ||u||_p."""
    A = kernel_matrix(pair.sigma, pair.omega)
    return pair.omega.w[:, None] ** (1 / p) * A * pair.sigma.w[None, :] ** (-1 / p)


def _lp(v, p):
    return float(np.sum(np.abs(v) ** p) ** (1 / p))


def _norm_ratio(W, u, p):
    d = _lp(u, p)
    return _lp(W @ u, p) / d if d > 0 else 0.0


def _brute_small(W, p, tol=1e-3, max_cells=2_000_000):
    """Branch and bound over the faces {u_i = 1} of the cube; returns
    (best, argmax u, certified upper bound)."""
    k = W.shape[1]
    cols = np.array([_lp(W[:, j], p) for j in range(k)])
    if k == 1:
        return cols[0], np.ones(1), cols[0]
    best, best_u = -1.0, None
    heap = []

    def push(face, c, h):
        nonlocal best, best_u
        u = np.insert(c, face, 1.0)
        val = _norm_ratio(W, u, p)
        if val > best:
            best, best_u = val, u
        # on the cell: ||W u|| <= ||W c|| + h sum of free columns, ||u|| >= ||(|c| - h)_+||
        free = np.delete(cols, face).sum()
        low = np.insert(np.maximum(np.abs(c) - h, 0.0), face, 1.0)
        ub = (_lp(W @ u, p) + h * free) / _lp(low, p)
        heapq.heappush(heap, (-ub, face, tuple(c), h))

    for face in range(k):
        push(face, np.zeros(k - 1), 1.0)
    cells = 0
    while heap:
        neg_ub, face, c, h = heapq.heappop(heap)
        if -neg_ub <= best + tol:
            return best, best_u, -neg_ub if -neg_ub > best else best
        cells += 1
        if cells > max_cells:
            raise TooLarge("brute-force budget exhausted")
        c = np.array(c)
        for signs in itertools.product((-0.5, 0.5), repeat=k - 1):
            push(face, c + h * np.array(signs), h / 2)
    return best, best_u, best


def _boyd(W, p, u0, maxiter=10_000, tol=1e-10):
    """Dual-vector power iteration for ||W||_{p->p}; nondecreasing values."""
    pp = conj(p)
    u = u0 / _lp(u0, p)
    val = _lp(W @ u, p)
    for _ in range(maxiter):
        v = W @ u
        s = np.abs(v) ** (p - 1) * np.sign(v)
        w = W.T @ s
        if not np.any(w):
            break
        u_new = np.abs(w) ** (pp - 1) * np.sign(w)
        u_new /= _lp(u_new, p)
        new = _lp(W @ u_new, p)
        u = u_new
        if new <= val * (1 + tol):
            val = max(val, new)
            break
        val = new
    return val, u


def operator_norm(pair, p, method="exact_p2", restarts=32, seed=0, max_atoms=3):
    if len(pair.sigma) == 0 or len(pair.omega) == 0:
        return CharacteristicReport("norm", p, 0.0, EXACT, None, {"method": method})
    W = weighted_matrix(pair, p)
    if method == "exact_p2":
        if p != 2:
            raise ValueError("exact_p2 needs p = 2")
        U, s, Vt = np.linalg.svd(W, full_matrices=False)
        f = Vt[0] / np.sqrt(pair.sigma.w)
        return CharacteristicReport("norm", p, float(s[0]), EXACT, f, {"method": method})
    if method == "brute_small":
        if len(pair.sigma) > max_atoms:
            raise TooLarge(f"brute_small allows at most {max_atoms} sigma atoms")
        best, u, ub = _brute_small(W, p)
        f = u * pair.sigma.w ** (-1 / p)
        return CharacteristicReport("norm", p, float(best), LOWER, f,
                                    {"method": method, "upper_bound": float(ub)})
    if method == "ascent":
        rng = _rng(seed)
        seeds = [np.linalg.svd(W, full_matrices=False)[2][0], np.ones(W.shape[1])]
        while len(seeds) < restarts:
            seeds.append(rng.normal(size=W.shape[1]))
        best, best_u = -1.0, None
        for u0 in seeds[:max(restarts, 2)]:
            val, u = _boyd(W, p, u0)
            if val > best:
                best, best_u = val, u
        f = best_u * pair.sigma.w ** (-1 / p)
        return CharacteristicReport("norm", p, float(best), LOWER, f,
                                    {"method": method, "restarts": restarts, "seed": str(seed)})
    raise ValueError(f"unknown method {method!r}")


def norm_ratio(pair, p, f):
    """||H_sigma f||_{L^p(omega)} / ||f||_{L^p(sigma)}."""
    f = np.asarray(_vals(f), dtype=float)
    A = kernel_matrix(pair.sigma, pair.omega)
    den = lp_norm(f, pair.sigma.w, p)
    if den == 0:
        raise ZeroDenominator("f vanishes")
    return lp_norm(A @ f, pair.omega.w, p) / den


# -- testing ---------------------------------------------------------------------
def _scalar_testing(pair, p, local, fam):
    H = _hilbert_indicators(pair, fam)
    best, arg, inf = 0.0, None, False
    w = pair.omega.w
    for k in range(len(fam)):
        if local:
            i, j = fam.wi[k], fam.wj[k]
            num = float(np.sum(w[i:j] * np.abs(H[i:j, k]) ** p))
        else:
            num = float(np.sum(w * np.abs(H[:, k]) ** p))
        r = _safe_ratio(num, fam.ms[k])
        if r == np.inf:
            inf = True
            continue
        if r > best:
            best, arg = r, fam.labels[k]
    return best ** (1 / p), arg, inf


def _quad_setup(pair, kind, fam):
    keep = [k for k in range(len(fam)) if fam.ms[k] > 0]
    H = _hilbert_indicators(pair, fam)[:, keep]
    U = H ** 2
    if kind == "quad_local":
        U *= _indicator(len(pair.omega), fam.wi[keep], fam.wj[keep])
    V = _indicator(len(pair.sigma), fam.si[keep], fam.sj[keep])
    return [fam.labels[k] for k in keep], U, V


def _optimize_quad(obj, n, restarts, rng, maxiter, tol):
    singles = np.array([obj.value_b(np.eye(1, n, k)[0]) for k in range(n)])
    k0 = int(np.argmax(singles))
    b0 = np.eye(1, n, k0)[0]
    extra = [one_hot(n, k0)]
    v, theta, nfev = maximize(obj, random_starts(rng, n, restarts, extra=extra),
                              maxiter=maxiter, tol=tol)
    if theta is None or singles[k0] >= v:
        return float(singles[k0]), b0, nfev
    # the ratio is scale invariant; shift so the witness stays finite
    return float(v), np.exp(theta - np.max(theta)), nfev


def testing(pair, p, kind="scalar_local", side="forward", intervals="dyadic",
            restarts=32, seed=0, maxiter=10_000, tol=1e-10):
    if side == "dual":
        rep = testing(pair.swapped(), conj(p), kind, "forward", intervals, restarts, seed,
                      maxiter, tol)
        rep.name = rep.name.replace("forward", "dual")
        rep.meta["side"] = "dual"
        rep.p = p
        return rep
    name = f"testing_{kind}_forward"
    if len(pair.omega) == 0 or len(pair.sigma) == 0:
        return CharacteristicReport(name, p, 0.0, EXACT, None, {"side": side})
    fam = _family(pair, intervals)
    if kind in ("scalar_local", "scalar_global"):
        val, arg, inf = _scalar_testing(pair, p, kind == "scalar_local", fam)
        flags = ("infinite_ratio",) if inf else ()
        return CharacteristicReport(name, p, float(val), EXACT, arg,
                                    {"side": side, "intervals": intervals}, flags)
    if kind not in ("quad_local", "quad_global"):
        raise ValueError(f"unknown testing kind {kind!r}")
    labels, U, V = _quad_setup(pair, kind, fam)
    if not labels:
        return CharacteristicReport(name, p, 0.0, EXACT, None, {"side": side})
    obj = QuadRatio(U, V, pair.omega.w, pair.sigma.w, p)
    val, b, nfev = _optimize_quad(obj, len(labels), restarts, _rng(seed), maxiter, tol)
    wit = {"intervals": labels, "b": tuple(float(x) for x in b)}
    return CharacteristicReport(name, p, val, LOWER, wit,
                                {"side": side, "intervals": intervals, "restarts": restarts,
                                 "seed": str(seed), "nfev": nfev})


def quad_testing_value(pair, p, kind, intervals, b):
    """Direct evaluation of the quadratic testing ratio for given (I_i, a_i^2)."""
    g = pair.grid
    fam = _Family(pair, list(intervals), [(g.lo(I), g.hi(I)) for I in intervals])
    labels, U, V = _quad_setup(pair, kind, fam)
    keep = [k for k in range(len(fam)) if fam.ms[k] > 0]
    return QuadRatio(U, V, pair.omega.w, pair.sigma.w, p).value_b(np.asarray(b)[keep])


# -- Muckenhoupt -------------------------------------------------------------------
def _offset_pairs(pair, fam):
    g = pair.grid
    idx = {I: k for k, I in enumerate(fam.labels)}
    out = []
    for k, I in enumerate(fam.labels):
        if fam.mw[k] <= 0:
            continue
        for m in range(1 << I.k):
            J = DyadicInterval(I.k, m)
            if J == I or g.tdist(I, J) > g.r * g.tlen(I):
                continue
            if fam.ms[idx[J]] > 0:
                out.append((k, idx[J]))
    return out


def _tail_kernels(pair, fam, region):
    """Sparse entries (i, y, kappa) with kappa = sigma_y / |y - c_i| over the
    sigma atoms of 3I \\ I (region 'triple') or R \\ I (region 'global')."""
    g = pair.grid
    ys, ws = pair.sigma.x, pair.sigma.w
    ent_i, ent_y, kap = [], [], []
    items = []
    for k, I in enumerate(fam.labels):
        if fam.mw[k] <= 0:
            continue
        c, ell = float(g.center(I)), float(g.length(I))
        inside = np.zeros(len(ys), dtype=bool)
        inside[fam.si[k]:fam.sj[k]] = True
        sel = ~inside
        if region == "triple":
            sel &= (ys >= c - 1.5 * ell) & (ys < c + 1.5 * ell)
        ysel = np.nonzero(sel)[0]
        if len(ysel) == 0:
            continue
        row = len(items)
        items.append(k)
        ent_i.extend([row] * len(ysel))
        ent_y.extend(ysel.tolist())
        kap.extend((ws[ysel] / np.abs(ys[ysel] - c)).tolist())
    return items, np.array(ent_i, dtype=int), np.array(ent_y, dtype=int), np.array(kap)


class _TailRatio:
    """(int_omega (sum_i t_i^2 1_{I_i})^{q/2} / int_sigma (sum_i F_iy^2)^{q/2})^{1/q},
    t_i = sum_y F_iy kappa_iy, with F = exp(theta) on the sparse support."""

    def __init__(self, pair, fam, items, ei, ey, kap, q):
        self.q, self.ei, self.ey, self.kap = q, ei, ey, kap
        self.n_items = len(items)
        self.wI = _indicator(len(pair.omega), fam.wi[items], fam.wj[items])
        self.ww, self.ws = pair.omega.w, pair.sigma.w
        self.ns = len(pair.sigma)

    def parts(self, F):
        h = self.q / 2
        t = np.bincount(self.ei, F * self.kap, minlength=self.n_items)
        Qx = self.wI @ (t ** 2)
        R = np.bincount(self.ey, F ** 2, minlength=self.ns)
        posq, posr = Qx > 0, R > 0
        N = float(np.sum(np.where(posq, self.ww * np.where(posq, Qx, 1) ** h, 0)))
        D = float(np.sum(np.where(posr, self.ws * np.where(posr, R, 1) ** h, 0)))
        return t, Qx, R, N, D

    def value_F(self, F):
        _, _, _, N, D = self.parts(F)
        return _safe_ratio(N, D) ** (1 / self.q)

    def __call__(self, theta):
        F = np.exp(np.clip(theta, -700, 700))
        q, h = self.q, self.q / 2
        t, Qx, R, N, D = self.parts(F)
        if N <= 0 or D <= 0:
            return -np.inf, np.zeros_like(theta)
        cq = np.where(Qx > 0, self.ww * np.where(Qx > 0, Qx, 1) ** (h - 1), 0)
        s = self.wI.T @ cq
        gN = q * t[self.ei] * self.kap * s[self.ei]
        cr = np.where(R > 0, self.ws * np.where(R > 0, R, 1) ** (h - 1), 0)
        gD = q * cr[self.ey] * F
        v = (np.log(N) - np.log(D)) / q
        return v, (gN / N - gD / D) * F / q


def _tail_quad(pair, p, region, fam, restarts, rng, maxiter, tol):
    items, ei, ey, kap = _tail_kernels(pair, fam, region)
    if not items:
        return 0.0, None, 0
    obj = _TailRatio(pair, fam, items, ei, ey, kap, p)
    pp = conj(p)
    prof = (kap / pair.sigma.w[ey]) ** (pp - 1)  # single-interval Hoelder optimizer
    singles = []
    for r in range(len(items)):
        F = np.where(ei == r, prof, 0.0)
        singles.append(obj.value_F(F))
    r0 = int(np.argmax(singles))
    base = np.log(prof)
    start0 = np.where(ei == r0, base, base - 30.0)
    starts = [start0, base]
    while len(starts) < restarts:
        starts.append(base + rng.normal(0.0, 2.0, len(base)))
    v, theta, nfev = maximize(obj, starts[:max(restarts, 2)], maxiter=maxiter, tol=tol)
    if theta is None or singles[r0] >= v:
        F = np.where(ei == r0, prof, 0.0)
        v = singles[r0]
    else:
        F = np.exp(theta - np.max(theta))
    wit = {"intervals": [fam.labels[items[r]] for r in range(len(items))],
           "entries": [(fam.labels[items[i]], int(y), float(x)) for i, y, x in zip(ei, ey, F) if x > 0]}
    return float(v), wit, nfev


def tail_quad_value(pair, p, region, entries):
    """Direct evaluation of the triple/global quadratic Muckenhoupt ratio
    for entries (I, sigma atom index, F)."""
    g = pair.grid
    ivs = sorted({I for I, _, _ in entries})
    fam = _Family(pair, ivs, [(g.lo(I), g.hi(I)) for I in ivs])
    row = {I: r for r, I in enumerate(ivs)}
    ei = np.array([row[I] for I, _, _ in entries], dtype=int)
    ey = np.array([y for _, y, _ in entries], dtype=int)
    F = np.array([x for _, _, x in entries])
    c = np.array([float(g.center(I)) for I in ivs])
    kap = pair.sigma.w[ey] / np.abs(pair.sigma.x[ey] - c[ei])
    obj = _TailRatio(pair, fam, list(range(len(ivs))), ei, ey, kap, p)
    return obj.value_F(F)


def _muck_quad_setup(pair, kind, fam):
    nw, ns = len(pair.omega), len(pair.sigma)
    if kind == "plain_quad":
        keep = [k for k in range(len(fam)) if fam.ms[k] > 0 and fam.mw[k] > 0]
        coef = np.array([(fam.ms[k] / fam.length[k]) ** 2 for k in keep])
        U = _indicator(nw, fam.wi[keep], fam.wj[keep]) * coef[None, :]
        V = _indicator(ns, fam.si[keep], fam.sj[keep])
        return [fam.labels[k] for k in keep], U, V
    prs = _offset_pairs(pair, fam)
    coef = np.array([(fam.ms[j] / fam.length[j]) ** 2 for _, j in prs])
    U = _indicator(nw, fam.wi[[i for i, _ in prs]], fam.wj[[i for i, _ in prs]]) * coef[None, :]
    V = _indicator(ns, fam.si[[j for _, j in prs]], fam.sj[[j for _, j in prs]])
    return [(fam.labels[i], fam.labels[j]) for i, j in prs], U, V


def muck_quad_value(pair, p, kind, items, b):
    """Direct evaluation of the plain/offset quadratic Muckenhoupt ratio."""
    g = pair.grid
    fam = dyadic_family(pair)
    idx = {I: k for k, I in enumerate(fam.labels)}
    nw, ns = len(pair.omega), len(pair.sigma)
    if kind == "plain_quad":
        ks = [idx[I] for I in items]
        js = ks
    else:
        ks = [idx[I] for I, _ in items]
        js = [idx[J] for _, J in items]
    coef = np.array([(fam.ms[j] / fam.length[j]) ** 2 for j in js])
    U = _indicator(nw, fam.wi[ks], fam.wj[ks]) * coef[None, :]
    V = _indicator(ns, fam.si[js], fam.sj[js])
    return QuadRatio(U, V, pair.omega.w, pair.sigma.w, p).value_b(np.asarray(b))


def offset_single(pair, p, I, J):
    """Offset ratio of the one-term sequence (I, I* = J)."""
    g = pair.grid
    ms = float(pair.sigma.mass(g.lo(J), g.hi(J)))
    mw = float(pair.omega.mass(g.lo(I), g.hi(I)))
    if ms == 0:
        return 0.0
    return (ms / float(g.length(J))) * mw ** (1 / p) / ms ** (1 / p)


def muckenhoupt(pair, p, kind="tailed_scalar", side="forward", restarts=32, seed=0,
                maxiter=10_000, tol=1e-10):
    if side == "dual":
        rep = muckenhoupt(pair.swapped(), conj(p), kind, "forward", restarts, seed, maxiter, tol)
        rep.name = rep.name.replace("forward", "dual")
        rep.meta["side"] = "dual"
        rep.p = p
        return rep
    name = f"muckenhoupt_{kind}_forward"
    g = pair.grid
    if len(pair.omega) == 0 or len(pair.sigma) == 0:
        return CharacteristicReport(name, p, 0.0, EXACT, None, {"side": side})
    fam = dyadic_family(pair)
    pp = conj(p)
    if kind == "tailed_scalar":
        best, arg = 0.0, None
        x, w = pair.omega.x, pair.omega.w
        for k, I in enumerate(fam.labels):
            lo, hi, ell = float(fam.a[k]), float(fam.b[k]), fam.length[k]
            d = np.maximum(0.0, np.maximum(lo - x, x - hi))
            d[fam.wi[k]:fam.wj[k]] = 0.0
            tail = float(np.sum((ell / (ell + d)) ** p * w))
            v = (tail / ell) ** (1 / p) * (fam.ms[k] / ell) ** (1 / pp)
            if v > best:
                best, arg = v, I
        return CharacteristicReport(name, p, best, EXACT, arg, {"side": side})
    if kind == "punctured_scalar":
        common = set(pair.sigma.positions) & set(pair.omega.positions)
        best, arg = 0.0, None
        for k, I in enumerate(fam.labels):
            cut = max((m for x, m in zip(pair.omega.positions, pair.omega.masses)
                       if x in common and fam.a[k] <= x < fam.b[k]), default=0)
            wq = fam.mw[k] - float(cut)
            ell = fam.length[k]
            v = (wq / ell) ** (1 / p) * (fam.ms[k] / ell) ** (1 / pp)
            if v > best:
                best, arg = v, I
        flags = () if common else ("no_common_atoms_equals_plain_Ap",)
        return CharacteristicReport(name, p, best, EXACT, arg, {"side": side}, flags)
    rng = _rng(seed)
    meta = {"side": side, "restarts": restarts, "seed": str(seed)}
    if kind in ("triple_quad", "global_quad"):
        v, wit, nfev = _tail_quad(pair, p, "triple" if kind == "triple_quad" else "global",
                                  fam, restarts, rng, maxiter, tol)
        meta["nfev"] = nfev
        return CharacteristicReport(name, p, v, LOWER if wit else EXACT, wit, meta)
    if kind not in ("offset_quad", "plain_quad"):
        raise ValueError(f"unknown Muckenhoupt kind {kind!r}")
    items, U, V = _muck_quad_setup(pair, kind, fam)
    if not items:
        return CharacteristicReport(name, p, 0.0, EXACT, None, meta)
    obj = QuadRatio(U, V, pair.omega.w, pair.sigma.w, p)
    val, b, nfev = _optimize_quad(obj, len(items), restarts, rng, maxiter, tol)
    meta["nfev"] = nfev
    return CharacteristicReport(name, p, val, LOWER, {"items": items, "b": tuple(float(x) for x in b)},
                                meta)


# -- weak boundedness --------------------------------------------------------------
def _wbp_orientation(pair, p):
    """Return (A measure, exponent, B measure) with a canonical orientation, so
    the computation is literally the same for (sigma, omega, p) and
    (omega, sigma, p')."""
    pp = conj(p)
    a = (pair.sigma, p, pair.omega)
    b = (pair.omega, pp, pair.sigma)
    if p < 2:
        return a
    if p > 2:
        return b
    ka = (pair.sigma.positions, pair.sigma.masses)
    kb = (pair.omega.positions, pair.omega.masses)
    return a if ka <= kb else b


class _WBPRatio:
    def __init__(self, c, VA, VB, wA, wB, qa, qb):
        self.c, self.VA, self.VB, self.wA, self.wB, self.qa, self.qb = c, VA, VB, wA, wB, qa, qb
        self.n = len(c)

    def value(self, s, t):
        num = float(np.sum(np.exp(s + t) * self.c))
        da = float(np.sum(self.wA * (self.VA @ np.exp(2 * s)) ** (self.qa / 2)))
        db = float(np.sum(self.wB * (self.VB @ np.exp(2 * t)) ** (self.qb / 2)))
        return num / (da ** (1 / self.qa) * db ** (1 / self.qb))

    def __call__(self, z):
        z = np.clip(z, -350, 350)
        s, t = z[:self.n], z[self.n:]
        e = np.exp(s + t) * self.c
        num = e.sum()
        out = []
        logs = np.log(num)
        gs, gt = e / num, e / num
        for V, w, q, x, gx in ((self.VA, self.wA, self.qa, s, gs), (self.VB, self.wB, self.qb, t, gt)):
            b2 = np.exp(2 * x)
            Q = V @ b2
            pos = Q > 0
            Qs = np.where(pos, Q, 1.0)
            D = float(np.sum(np.where(pos, w * Qs ** (q / 2), 0)))
            coef = np.where(pos, w * (q / 2) * Qs ** (q / 2 - 1), 0)
            gD = (coef @ V) * 2 * b2
            logs -= np.log(D) / q
            out.append(gx - gD / (q * D))
        return logs, np.concatenate(out)


def wbp(pair, p, r=None, restarts=32, seed=0, maxiter=10_000, tol=1e-10):
    g = pair.grid
    r = g.r if r is None else r
    A, qa, B = _wbp_orientation(pair, p)
    qb = conj(qa)
    name = "wbp"
    if len(A) == 0 or len(B) == 0:
        return CharacteristicReport(name, p, 0.0, EXACT, None, {})
    ivs = g.all_intervals()
    ranges = {}
    for I in ivs:
        ranges[I] = (A.irange(g.lo(I), g.hi(I)), B.irange(g.lo(I), g.hi(I)))
    # kernel K[b, a] = m_a m_b / (a - b): the pairing of an A-interval with a B-interval
    K = (A.w[None, :] * B.w[:, None]) / (A.x[None, :] - B.x[:, None])
    CK = np.zeros((len(B) + 1, len(A) + 1))
    CK[1:, 1:] = np.cumsum(np.cumsum(K, axis=0), axis=1)
    pairs, cs = [], []
    for I in ivs:
        (ai, aj), _ = ranges[I]
        if aj <= ai:
            continue
        for J in ivs:
            _, (bi, bj) = ranges[J]
            if bj <= bi or abs(I.k - J.k) > r or not g.disjoint(I, J) or g.tdist(I, J) != 0:
                continue
            c = abs(CK[bj, aj] - CK[bi, aj] - CK[bj, ai] + CK[bi, ai])
            if c > 0:
                pairs.append((I, J))
                cs.append(c)
    if not pairs:
        return CharacteristicReport(name, p, 0.0, EXACT, None, {})
    n = len(pairs)
    VA = _indicator(len(A), [ranges[I][0][0] for I, _ in pairs], [ranges[I][0][1] for I, _ in pairs])
    VB = _indicator(len(B), [ranges[J][1][0] for _, J in pairs], [ranges[J][1][1] for _, J in pairs])
    obj = _WBPRatio(np.array(cs), VA, VB, A.w, B.w, qa, qb)
    singles = [obj.value(np.where(np.arange(n) == k, 0.0, -350.0),
                         np.where(np.arange(n) == k, 0.0, -350.0)) for k in range(n)]
    k0 = int(np.argmax(singles))
    rng = _rng(seed)
    starts = [np.concatenate([one_hot(n, k0)] * 2), np.zeros(2 * n)]
    while len(starts) < restarts:
        starts.append(rng.normal(0, 2.0, 2 * n))
    v, z, nfev = maximize(obj, starts[:max(restarts, 2)], maxiter=maxiter, tol=tol)
    if z is None or singles[k0] >= v:
        v = singles[k0]
        z = np.concatenate([np.where(np.arange(n) == k0, 0.0, -350.0)] * 2)
    ori = "sigma" if A is pair.sigma else "omega"
    # the ratio is scale-free in a and in b separately
    za, zb = z[:n] - z[:n].max(), z[n:] - z[n:].max()
    wit = {"pairs": pairs, "a": tuple(np.exp(za)), "b": tuple(np.exp(zb)), "orientation": ori}
    return CharacteristicReport(name, p, float(v), LOWER, wit,
                                {"r": r, "restarts": restarts, "seed": str(seed), "nfev": nfev})


def wbp_value(pair, p, pairs, a, b):
    """Direct evaluation of the weak boundedness ratio, pairs (I, J) with
    coefficients a_i on I (sigma side) and b_i on J (omega side)."""
    g = pair.grid
    pp = conj(p)
    num = 0.0
    sig, om = pair.sigma, pair.omega
    fa = np.zeros(len(sig))
    fb = np.zeros(len(om))
    for (I, J), ai, bi in zip(pairs, a, b):
        si, sj = sig.irange(g.lo(I), g.hi(I))
        wi, wj = om.irange(g.lo(J), g.hi(J))
        c = sum(om.w[x] * sig.w[y] / (sig.x[y] - om.x[x]) for x in range(wi, wj) for y in range(si, sj))
        num += ai * bi * abs(c)
        fa[si:sj] += ai ** 2
        fb[wi:wj] += bi ** 2
    da = float(np.sum(sig.w * fa ** (p / 2))) ** (1 / p)
    db = float(np.sum(om.w * fb ** (pp / 2))) ** (1 / pp)
    return num / (da * db)


# -- energies ----------------------------------------------------------------------
def p_energy(omega, J, p, grid=None):
    """(E_p(J, omega), Haar-square form), both 0 when |J|_omega = 0."""
    if isinstance(J, DyadicInterval):
        a, b = grid.lo(J), grid.hi(J)
    else:
        a, b = J
    i, j = omega.irange(a, b)
    m = omega.w[i:j]
    if j <= i:
        return 0.0, 0.0
    x = omega.x[i:j]
    tot = m.sum()
    mean = float(np.sum(m * x) / tot)
    val = (float(np.sum(m * np.abs(x - mean) ** p)) / tot) ** (1 / p)
    if grid is None or not isinstance(J, DyadicInterval):
        return float(val), None
    hw = HaarSystem(grid, omega)
    sq = np.zeros(len(omega))
    for Q in grid.descendants(J, max_level=grid.L - 1):
        sq += np.asarray(hw.delta(omega.x, Q), dtype=float) ** 2
    sq_form = (float(np.sum(m * sq[i:j] ** (p / 2))) / tot) ** (1 / p)
    return float(val), float(sq_form)


class _EnergyTables:
    """Per-interval data for the energy terms
    (P(J, 1_{I \\ J} sigma)/l(J))^p E_p(J, omega)^p |J|_omega."""

    def __init__(self, pair, p):
        self.pair, self.p = pair, p
        g = pair.grid
        self.g = g
        self.ivs = g.all_intervals()
        self.mw, self.ms, self.Ep, self.pre = {}, {}, {}, {}
        ys, ws = pair.sigma.x, pair.sigma.w
        for J in self.ivs:
            i, j = pair.omega.irange(g.lo(J), g.hi(J))
            m = pair.omega.w[i:j]
            self.mw[J] = float(m.sum())
            si, sj = pair.sigma.irange(g.lo(J), g.hi(J))
            self.ms[J] = float(ws[si:sj].sum())
            self.Ep[J] = _ep_pow(pair.omega, i, j, p)
            ell, c = float(g.length(J)), float(g.center(J))
            kern = ell / (ell + np.abs(ys - c)) ** 2 * ws / ell
            self.pre[J] = (np.concatenate([[0.0], np.cumsum(kern)]), si, sj)

    def poisson_hole(self, J, I):
        """P(J, 1_{I \\ J} sigma) / l(J)."""
        cum, si, sj = self.pre[J]
        i, j = self.pair.sigma.irange(self.g.lo(I), self.g.hi(I))
        return (cum[j] - cum[i]) - (cum[sj] - cum[si])

    def term(self, J, I):
        if self.Ep[J] == 0.0:
            return 0.0
        return self.poisson_hole(J, I) ** self.p * self.Ep[J] * self.mw[J]


def _ep_pow(omega, i, j, p):
    """E_p(J, omega)^p from the atom slice [i, j)."""
    if j <= i:
        return 0.0
    m, x = omega.w[i:j], omega.x[i:j]
    tot = m.sum()
    mean = float(np.sum(m * x) / tot)
    return float(np.sum(m * np.abs(x - mean) ** p)) / tot


def _best_partition(tab, I):
    """Tree DP: best(J) = max(term(J; I), best(J-) + best(J+)) over J inside I."""
    g = tab.g
    best, choice = {}, {}
    for J in reversed(g.descendants(I)):
        t = tab.term(J, I) if J != I else 0.0
        if J.k < g.L:
            a, b = g.children(J)
            s = best[a] + best[b]
        else:
            s = 0.0
        if t >= s and t > 0:
            best[J], choice[J] = t, True
        else:
            best[J], choice[J] = s, False
    part, stack = [], [I]
    while stack:
        J = stack.pop()
        if choice[J]:
            part.append(J)
        elif J.k < g.L and best[J] > 0:
            stack.extend(g.children(J))
    return best[I], sorted(part)


def energy_characteristic(pair, p):
    """Exact sup over roots I and subpartitions; value E_p, E_p^p in meta."""
    tab = _EnergyTables(pair, p)
    best, arg = 0.0, None
    flags = ()
    for I in tab.ivs:
        tot, part = _best_partition(tab, I)
        r = _safe_ratio(tot, tab.ms[I])
        if r == np.inf:
            flags = ("infinite_ratio",)
            continue
        if r > best:
            best, arg = r, (I, part)
    return CharacteristicReport("energy", p, best ** (1 / p), EXACT, arg,
                                {"p_power": best}, flags)


def energy_bruteforce(pair, p, max_level=5):
    """Enumerate every antichain of the intervals with a positive term."""
    g = pair.grid
    if g.L > max_level:
        raise TooLarge("brute-force energy limited to small grids")
    tab = _EnergyTables(pair, p)
    best = 0.0
    for I in tab.ivs:
        if tab.ms[I] <= 0:
            continue
        rel = [J for J in g.descendants(I, include_self=False) if tab.term(J, I) > 0]
        vals = [tab.term(J, I) for J in rel]
        top = 0.0

        def rec(k, chosen, acc):
            nonlocal top
            if k == len(rel):
                top = max(top, acc)
                return
            rec(k + 1, chosen, acc)
            J = rel[k]
            if all(g.disjoint(J, K) for K in chosen):
                rec(k + 1, chosen + [J], acc + vals[k])
        rec(0, [], 0.0)
        best = max(best, top / tab.ms[I])
    return best


def stopping_energy(pair, p, forest):
    """X_{F;p}: sup over tops F and child-good I in the corona of F."""
    tab = _EnergyTables(pair, p)
    g = pair.grid
    cg = g.child_good_set
    best, arg, per = 0.0, None, {}
    infinite = []
    for F in forest.tops:
        top = 0.0
        for I in forest.corona(F):
            if I not in cg:
                continue
            r = _safe_ratio(tab.term(I, F), tab.ms[I])
            if r == np.inf:
                infinite.append((F, I))
                continue
            if r > top:
                top = r
                if r > best:
                    best, arg = r, (F, I)
        per[F] = top
    flags = ("infinite_corona",) if infinite else ()
    return CharacteristicReport("stopping_energy", p, best ** (1 / p), EXACT, arg,
                                {"p_power": best, "per_top": per, "infinite": infinite}, flags)


# -- refined functional energy -----------------------------------------------------
def _whitney_data(pair, forest):
    """[(F, W, signed projection P Z / l(W), absolute projection |P| Z)] for the
    deep Whitney intervals W of each top F lying in its corona."""
    g = pair.grid
    hw = HaarSystem(g, pair.omega)
    Z = pair.omega.x
    diffs = hw.differences(Z)
    out = []
    for F in forest.tops:
        for W in g.whitney(F, "deep"):
            if forest.top_of(W) != F:
                continue
            lam = [Q for Q in g.descendants(W) if Q in diffs and forest.top_of(Q) == F]
            signed = np.asarray(hw.project(Z, lam, diffs=diffs), dtype=float)
            absolute = np.asarray(hw.project(Z, lam, absolute=True, diffs=diffs), dtype=float)
            out.append((F, W, signed, absolute))
    return out


def _poisson_rows(pair, data, mode):
    """Rows G with G @ h = P(W, h 1_S sigma)/l(W); S = F^c, F \\ W or W."""
    g = pair.grid
    ys, ws = pair.sigma.x, pair.sigma.w
    rows = []
    for F, W, _, _ in data:
        ell, c = float(g.length(W)), float(g.center(W))
        k = ws / (ell + np.abs(ys - c)) ** 2
        inF = (ys >= float(g.lo(F))) & (ys < float(g.hi(F)))
        inW = (ys >= float(g.lo(W))) & (ys < float(g.hi(W)))
        mask = {"outside": ~inF, "hole": inF & ~inW, "plug": inW}[mode]
        rows.append(np.where(mask, k, 0.0))
    return np.array(rows).reshape(len(data), len(ys))


class _FunctionalRatio:
    def __init__(self, G, S2, ww, ws, p):
        self.G, self.S2, self.ww, self.ws, self.p = G, S2, ww, ws, p

    def value_h(self, h):
        t = self.G @ h
        Q = self.S2 @ (t ** 2)
        N = float(np.sum(self.ww * Q ** (self.p / 2)))
        D = float(np.sum(self.ws * np.abs(h) ** self.p))
        return _safe_ratio(N, D) ** (1 / self.p)

    def __call__(self, theta):
        h = np.exp(np.clip(theta, -700, 700))
        p = self.p
        t = self.G @ h
        Q = self.S2 @ (t ** 2)
        pos = Q > 0
        Qs = np.where(pos, Q, 1.0)
        N = float(np.sum(np.where(pos, self.ww * Qs ** (p / 2), 0)))
        D = float(np.sum(self.ws * h ** p))
        if N <= 0:
            return -np.inf, np.zeros_like(theta)
        c = np.where(pos, self.ww * (p / 2) * Qs ** (p / 2 - 1), 0)
        gN = ((c @ self.S2) * 2 * t) @ self.G
        gD = p * self.ws * h ** (p - 1)
        v = (np.log(N) - np.log(D)) / p
        return v, (gN / N - gD / D) * h / p


def kernel_hat(pair, forest, data=None):
    """K[x, y] = sum_F sum_W (l(W) + |y - c_W|)^(-2) |P_{C(F) cap D[W]}| Z (x)."""
    g = pair.grid
    data = _whitney_data(pair, forest) if data is None else data
    K = np.zeros((len(pair.omega), len(pair.sigma)))
    ys = pair.sigma.x
    for F, W, _, ab in data:
        ell, c = float(g.length(W)), float(g.center(W))
        K += np.outer(ab, 1.0 / (ell + np.abs(ys - c)) ** 2)
    return K


def kernel_tests(pair, p, forest, data=None):
    g = pair.grid
    data = _whitney_data(pair, forest) if data is None else data
    K = kernel_hat(pair, forest, data)
    pp = conj(p)
    fam = dyadic_family(pair)
    sig, om = pair.sigma, pair.omega
    fwd, dual = 0.0, 0.0
    for k in range(len(fam)):
        if fam.ms[k] > 0:
            v = K[:, fam.si[k]:fam.sj[k]] @ sig.w[fam.si[k]:fam.sj[k]]
            fwd = max(fwd, lp_norm(v, om.w, p) / fam.ms[k] ** (1 / p))
        if fam.mw[k] > 0:
            v = om.w[fam.wi[k]:fam.wj[k]] @ K[fam.wi[k]:fam.wj[k], :]
            dual = max(dual, lp_norm(v, sig.w, pp) / fam.mw[k] ** (1 / pp))
    # monotonicity away from x: K(x, y2) <= 4 K(x, y1) for y1 between x and y2
    worst = 0.0
    for xi, x in enumerate(om.x):
        for side in (sig.x > x, sig.x < x):
            idx = np.nonzero(side)[0]
            vals = K[xi, idx]
            order = np.argsort(np.abs(sig.x[idx] - x))
            vals = vals[order]
            for a in range(len(vals)):
                if vals[a] > 0:
                    worst = max(worst, float(np.max(vals[a:]) / vals[a]))
                elif np.any(vals[a:] > 0):
                    worst = np.inf
    hole = _quadratic_energy(pair, p, data, "hole")
    plug = _quadratic_energy(pair, p, data, "plug")
    return {"T_forward": fwd, "T_dual": dual, "monotonicity_worst": worst,
            "monotonicity_ok": worst <= 4.0 * (1 + 1e-12), "E_hole": hole, "E_plug": plug,
            "kernel": K}


def _quadratic_energy(pair, p, data, mode):
    g = pair.grid
    if not data:
        return 0.0
    G = _poisson_rows(pair, data, mode)
    coef = G.sum(axis=1) ** 2  # P(W, 1_S sigma)/l(W), squared
    A2 = np.array([ab ** 2 for _, _, _, ab in data])
    best = 0.0
    for I0 in g.all_intervals():
        ms = float(pair.sigma.mass(g.lo(I0), g.hi(I0)))
        if ms <= 0:
            continue
        sel = np.array([g.contains(I0, F) for F, _, _, _ in data])
        if not sel.any():
            continue
        Q = (coef[sel][:, None] * A2[sel]).sum(axis=0)
        wi, wj = pair.omega.irange(g.lo(I0), g.hi(I0))
        val = float(np.sum(pair.omega.w[wi:wj] * Q[wi:wj] ** (p / 2))) / ms
        best = max(best, val)
    return best ** (1 / p)


def carleson_norm(forest, mu):
    g = forest.grid
    best = 0.0
    for F in forest.tops:
        mF = float(mu.mass(g.lo(F), g.hi(F)))
        if mF <= 0:
            continue
        tot = sum(float(mu.mass(g.lo(G), g.hi(G))) for G in forest.tops if g.contains(F, G))
        best = max(best, tot / mF)
    return best


def refined_functional_energy(pair, p, forest, restarts=32, seed=0, maxiter=10_000,
                              tol=1e-10, carleson_bound=np.inf):
    C0 = carleson_norm(forest, pair.sigma)
    if not C0 <= carleson_bound:
        raise NotCarleson(f"Carleson norm {C0} exceeds {carleson_bound}")
    data = _whitney_data(pair, forest)
    tests = kernel_tests(pair, p, forest, data)
    name = "functional_energy"
    if not data or len(pair.sigma) == 0:
        rep = CharacteristicReport(name, p, 0.0, EXACT, None, {"carleson": C0})
        return rep, tests
    G = _poisson_rows(pair, data, "outside")
    S2 = np.array([(sg / float(pair.grid.length(W))) ** 2 for _, W, sg, _ in data]).T
    obj = _FunctionalRatio(G, S2, pair.omega.w, pair.sigma.w, p)
    n = len(pair.sigma)
    ones = obj.value_h(np.ones(n))
    v, theta, nfev = maximize(obj, random_starts(_rng(seed), n, restarts), maxiter=maxiter, tol=tol)
    if theta is None or ones >= v:
        v, h = ones, np.ones(n)
    else:
        h = np.exp(theta - np.max(theta))
    rep = CharacteristicReport(name, p, float(v), LOWER, h,
                               {"carleson": C0, "ones_ratio": ones, "restarts": restarts,
                                "seed": str(seed), "nfev": nfev,
                                "whitney": [(F, W) for F, W, _, _ in data]})
    return rep, tests


def functional_energy_value(pair, p, forest, h):
    """LHS(h) / ||h||_{L^p(sigma)} by direct summation over (F, W)."""
    g = pair.grid
    h = np.asarray(h, dtype=float)
    Q = np.zeros(len(pair.omega))
    for F, W, sg, _ in _whitney_data(pair, forest):
        ell, c = float(g.length(W)), float(g.center(W))
        tot = 0.0
        for y, m, hv in zip(pair.sigma.x, pair.sigma.w, h):
            if not (float(g.lo(F)) <= y < float(g.hi(F))):
                tot += ell / (ell + abs(y - c)) ** 2 * m * hv
        Q += (tot / ell) ** 2 * sg ** 2
    num = float(np.sum(pair.omega.w * Q ** (p / 2)))
    den = float(np.sum(pair.sigma.w * np.abs(h) ** p))
    return _safe_ratio(num, den) ** (1 / p)


# -- vector-valued extension ---------------------------------------------------------
def vector_extension_gap(pair, p, fs):
    A = kernel_matrix(pair.sigma, pair.omega)
    F = np.array([np.asarray(_vals(f), dtype=float) for f in fs])
    den = float(np.sum(pair.sigma.w * np.sum(F ** 2, axis=0) ** (p / 2))) ** (1 / p)
    if den == 0:
        raise ZeroDenominator("the sequence vanishes")
    HF = F @ A.T
    num = float(np.sum(pair.omega.w * np.sum(HF ** 2, axis=0) ** (p / 2))) ** (1 / p)
    return num / den


# -- witness re-evaluation -------------------------------------------------------------
def reevaluate(pair, rep):
    """Recompute a lower-bound report's value from its stored witness."""
    n = rep.name
    if rep.mode == EXACT and rep.witness is None:
        return rep.value
    if rep.meta.get("side") == "dual":
        pair, p = pair.swapped(), conj(rep.p)
    else:
        p = rep.p
    if n == "norm":
        return norm_ratio(pair, p, rep.witness)
    if n.startswith("testing_quad"):
        kind = "quad_local" if "local" in n else "quad_global"
        return quad_testing_value(pair, p, kind, rep.witness["intervals"], rep.witness["b"])
    if n.startswith("muckenhoupt_") and n.split("_")[1] in ("triple", "global"):
        return tail_quad_value(pair, p, n.split("_")[1], rep.witness["entries"])
    if n.startswith("muckenhoupt_offset_quad") or n.startswith("muckenhoupt_plain_quad"):
        kind = "offset_quad" if "offset" in n else "plain_quad"
        return muck_quad_value(pair, p, kind, rep.witness["items"], rep.witness["b"])
    if n == "wbp":
        w = rep.witness
        if w["orientation"] == "sigma":
            return wbp_value(pair, p, w["pairs"], w["a"], w["b"])
        return wbp_value(pair.swapped(), conj(p), w["pairs"], w["a"], w["b"])
    raise ValueError(f"no re-evaluation for {n}")
