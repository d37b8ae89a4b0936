"""Weighted Haar system on an atomic measure.

Martingale differences are handled through the two child jumps
d_Q^- = E_{Q-} f - E_Q f and d_Q^+ = E_{Q+} f - E_Q f, which are rational
whenever the data are, so the same code serves float and exact arithmetic.
"""
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .measure_grid import DyadicInterval


class ZeroMass(ValueError):
    pass


@dataclass
class FunctionOnAtoms:
    measure: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.values) != len(self.measure):
            raise ValueError("one value per atom")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")


def _vals(f):
    return f.values if isinstance(f, FunctionOnAtoms) else f


def lp_norm(values, weights, p):
    v = np.abs(np.asarray(values, dtype=float))
    return float(np.sum(v ** p * weights)) ** (1.0 / p)


class HaarSystem:
    """Haar data of one measure on one grid; float by default, exact if asked."""

    def __init__(self, grid, mu, exact=False):
        self.grid = grid
        self.mu = mu
        self.exact = exact
        self._rng = {}
        if exact:
            self.m = list(mu.masses)
            cm = [Fraction(0)]
            for m in self.m:
                cm.append(cm[-1] + m)
            self.cm = cm
        else:
            self.m = mu.w
            self.cm = np.concatenate([[0.0], np.cumsum(mu.w)])

    def rng(self, I):
        got = self._rng.get(I)
        if got is None:
            got = self.mu.irange(self.grid.lo(I), self.grid.hi(I))
            self._rng[I] = got
        return got

    def mass(self, I):
        i, j = self.rng(I)
        return self.cm[j] - self.cm[i]

    def prefix(self, f):
        """Prefix sums of f * mass (list for exact mode, array otherwise)."""
        f = _vals(f)
        if self.exact:
            out = [Fraction(0)]
            for v, m in zip(f, self.m):
                out.append(out[-1] + Fraction(v) * m)
            return out
        return np.concatenate([[0.0], np.cumsum(np.asarray(f, dtype=float) * self.m)])

    def expectation(self, f, I, pre=None):
        m = self.mass(I)
        if m == 0:
            raise ZeroMass(f"{I} has zero mass")
        pre = self.prefix(f) if pre is None else pre
        i, j = self.rng(I)
        return (pre[j] - pre[i]) / m

    def nondegenerate(self, Q):
        if Q.k >= self.grid.L:
            return False
        a, b = self.grid.children(Q)
        return self.mass(a) > 0 and self.mass(b) > 0

    def support_candidates(self):
        return [Q for Q in self.grid.haar_intervals() if self.nondegenerate(Q)]

    def differences(self, f, intervals=None):
        """Q -> (d^-, d^+) over non-degenerate Q (optionally restricted)."""
        pre = self.prefix(f)
        out = {}
        for Q in (self.support_candidates() if intervals is None else intervals):
            if not self.nondegenerate(Q):
                continue
            a, b = self.grid.children(Q)
            e = self.expectation(None, Q, pre)
            out[Q] = (self.expectation(None, a, pre) - e, self.expectation(None, b, pre) - e)
        return out

    def haar_function(self, Q):
        """(values, degenerate flag) of h_Q."""
        h = np.zeros(len(self.mu))
        if not self.nondegenerate(Q):
            return h, True
        a, b = self.grid.children(Q)
        ma, mb = float(self.mass(a)), float(self.mass(b))
        s = 1.0 / np.sqrt(ma + mb)
        ia, ja = self.rng(a)
        ib, jb = self.rng(b)
        h[ia:ja] = -s * np.sqrt(mb / ma)
        h[ib:jb] = s * np.sqrt(ma / mb)
        return h, False

    def coefficient(self, f, Q):
        h, _ = self.haar_function(Q)
        return float(np.sum(np.asarray(_vals(f), dtype=float) * h * self.mu.w))

    def martingale_difference(self, f, Q):
        """(<f, h_Q>, Delta_Q f)."""
        c = self.coefficient(f, Q)
        h, _ = self.haar_function(Q)
        return c, c * h

    def delta(self, f, Q, diffs=None):
        """Delta_Q f through the child jumps (exact in exact mode)."""
        if diffs is None:
            diffs = self.differences(f, [Q])
        out = [0] * len(self.mu) if self.exact else np.zeros(len(self.mu))
        if Q not in diffs:
            return out
        dm, dp = diffs[Q]
        a, b = self.grid.children(Q)
        for child, d in ((a, dm), (b, dp)):
            i, j = self.rng(child)
            for t in range(i, j):
                out[t] = d
        return out

    def project(self, f, Lam, absolute=False, diffs=None):
        diffs = self.differences(f) if diffs is None else diffs
        if absolute:
            acc = np.zeros(len(self.mu))
            for Q in Lam:
                if Q in diffs:
                    acc += np.asarray(self.delta(f, Q, diffs), dtype=float) ** 2
            return np.sqrt(acc)
        acc = [0] * len(self.mu) if self.exact else np.zeros(len(self.mu))
        for Q in Lam:
            if Q in diffs:
                d = self.delta(f, Q, diffs)
                if self.exact:
                    acc = [u + v for u, v in zip(acc, d)]
                else:
                    acc = acc + d
        return acc

    def square_function(self, f, kind="haar", forest=None, rho=None, delta=None):
        diffs = self.differences(f)
        if kind == "haar":
            return self.project(f, list(diffs), absolute=True, diffs=diffs)
        if kind == "corona":
            if forest is None:
                raise ValueError("corona square function needs a forest")
            groups = {}
            for Q in diffs:
                groups.setdefault(forest.top_of(Q), []).append(Q)
            acc = np.zeros(len(self.mu))
            for F in sorted(groups):
                acc += np.asarray(self.project(f, groups[F], diffs=diffs), dtype=float) ** 2
            return np.sqrt(acc)
        if kind == "nearby":
            return self._nearby(f, diffs, rho, delta)
        raise ValueError(f"unknown kind {kind!r}")

    def _nearby(self, f, diffs, rho, delta):
        g = self.grid
        deltas = {Q: np.asarray(self.delta(f, Q, diffs), dtype=float) for Q in diffs}
        out = np.zeros(len(self.mu))
        for t, xpos in enumerate(self.mu.positions):
            tick = int(xpos / g.scale)
            total = 0.0
            for kI in range(g.L + 1):
                I = DyadicInterval(kI, tick >> (g.L - kI))
                s = 0.0
                for Q, dv in deltas.items():
                    if abs(Q.k - kI) > rho or dv[t] == 0.0:
                        continue
                    # gap measured in units of l(I)
                    dist = g.tdist(Q, I) / g.tlen(I)
                    s += 2.0 ** (-delta * dist) * dv[t]
                total += s * s
            out[t] = np.sqrt(total)
        return out

    def dyadic_maximal(self, fs):
        """Dyadic maximal function, or the l2 aggregate of it for a sequence."""
        seq = fs if isinstance(fs, (list, tuple)) else [fs]
        agg = np.zeros(len(self.mu))
        for f in seq:
            v = np.abs(np.asarray(_vals(f), dtype=float))
            pre = np.concatenate([[0.0], np.cumsum(v * self.mu.w)])
            mf = np.zeros(len(self.mu))
            for I in self.grid.levels():
                i, j = self.rng(I)
                if j > i:
                    avg = (pre[j] - pre[i]) / (self.cm[j] - self.cm[i])
                    np.maximum(mf[i:j], avg, out=mf[i:j])
            agg += mf ** 2
        return np.sqrt(agg)


def expectation(grid, mu, f, I):
    return HaarSystem(grid, mu).expectation(f, I)


def haar_function(grid, mu, Q):
    return HaarSystem(grid, mu).haar_function(Q)


def martingale_difference(grid, mu, Q, f):
    return HaarSystem(grid, mu).martingale_difference(f, Q)


def project(grid, mu, Lam, f, absolute=False):
    return HaarSystem(grid, mu).project(f, Lam, absolute)


def square_function(grid, mu, f, kind="haar", **kw):
    return HaarSystem(grid, mu).square_function(f, kind, **kw)


def dyadic_maximal(grid, mu, fs):
    return HaarSystem(grid, mu).dyadic_maximal(fs)
