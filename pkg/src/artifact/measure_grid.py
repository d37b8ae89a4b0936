"""Dyadic grid over T = [0, 2^M), atomic measures and goodness predicates.

Intervals are stored as (level k, offset n).  Geometry is done in integer
"ticks" of size 2^(M-L), so every endpoint of every grid interval is an
integer and membership / embedding tests are exact.
"""
from bisect import bisect_left
from fractions import Fraction
from functools import cached_property
from typing import NamedTuple

import numpy as np


class OutOfGrid(ValueError):
    pass


class CommonAtom(ValueError):
    pass


class InvalidGrid(ValueError):
    pass


class DyadicInterval(NamedTuple):
    """Level-k dyadic interval number n (a tuple, so hashing and ordering are cheap)."""
    k: int
    n: int

    def __repr__(self):
        return f"D({self.k},{self.n})"


def _frac(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x)


class Grid:
    """Dyadic grid of depth L on [0, 2^M) with goodness parameters."""

    def __init__(self, M, L, r=3, eps=Fraction(1, 8), tau=None, check=True):
        self.M = int(M)
        self.L = int(L)
        self.r = int(r)
        self.eps = _frac(eps)
        self.tau = self.r + 1 if tau is None else int(tau)
        if check:
            if not (0 < self.eps < Fraction(1, 4)):
                raise InvalidGrid("eps must lie in (0, 1/4)")
            if self.L < self.r + 3:
                raise InvalidGrid("need L >= r + 3")
            if self.tau != self.r + 1:
                raise InvalidGrid("tau must equal r + 1")
        self.scale = Fraction(2) ** (self.M - self.L)  # real length of one tick

    def __repr__(self):
        return f"Grid(M={self.M}, L={self.L}, r={self.r}, eps={self.eps}, tau={self.tau})"

    def __eq__(self, other):
        return isinstance(other, Grid) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def key(self):
        return (self.M, self.L, self.r, self.eps, self.tau)

    # -- geometry in ticks -------------------------------------------------
    @property
    def top(self):
        return DyadicInterval(0, 0)

    def tlen(self, I):
        return 1 << (self.L - I.k)

    def tlo(self, I):
        return I.n << (self.L - I.k)

    def thi(self, I):
        return (I.n + 1) << (self.L - I.k)

    def lo(self, I):
        return self.tlo(I) * self.scale

    def hi(self, I):
        return self.thi(I) * self.scale

    def length(self, I):
        return self.tlen(I) * self.scale

    def center(self, I):
        return (self.tlo(I) + self.thi(I)) * self.scale / 2

    def check(self, I):
        if not (0 <= I.k <= self.L and 0 <= I.n < (1 << I.k)):
            raise OutOfGrid(f"{I} not in {self}")
        return I

    def interval(self, k, n):
        return self.check(DyadicInterval(k, n))

    # -- navigation ---------------------------------------------------------
    def parent(self, I):
        if I.k == 0:
            raise OutOfGrid("top interval has no parent")
        return DyadicInterval(I.k - 1, I.n >> 1)

    def children(self, I):
        if I.k >= self.L:
            raise OutOfGrid("no children below level L")
        return DyadicInterval(I.k + 1, 2 * I.n), DyadicInterval(I.k + 1, 2 * I.n + 1)

    def sibling(self, I):
        if I.k == 0:
            raise OutOfGrid("top interval has no sibling")
        return DyadicInterval(I.k, I.n ^ 1)

    def navigate(self, I, relation):
        self.check(I)
        if relation == "parent":
            return self.parent(I)
        if relation == "left_child":
            return self.children(I)[0]
        if relation == "right_child":
            return self.children(I)[1]
        if relation == "sibling":
            return self.sibling(I)
        raise ValueError(f"unknown relation {relation!r}")

    def ancestor(self, I, k):
        """The unique level-k interval containing I (k <= I.k)."""
        return DyadicInterval(k, I.n >> (I.k - k))

    def ancestors(self, I):
        """Strict superintervals of I inside T, from the parent upwards."""
        return [DyadicInterval(k, I.n >> (I.k - k)) for k in range(I.k - 1, -1, -1)]

    def contains(self, I, J):
        """J subset of I."""
        return J.k >= I.k and (J.n >> (J.k - I.k)) == I.n

    def disjoint(self, I, J):
        return not (self.contains(I, J) or self.contains(J, I))

    def tdist(self, I, J):
        """Gap between two intervals in ticks (0 if they touch or overlap)."""
        return max(0, self.tlo(J) - self.thi(I), self.tlo(I) - self.thi(J))

    def dist(self, I, J):
        return self.tdist(I, J) * self.scale

    def child_containing(self, I, J):
        """The child of I that contains J (J strictly inside I)."""
        return DyadicInterval(I.k + 1, J.n >> (J.k - I.k - 1))

    def levels(self, lo=0, hi=None):
        hi = self.L if hi is None else hi
        for k in range(lo, hi + 1):
            for n in range(1 << k):
                yield DyadicInterval(k, n)

    def all_intervals(self):
        return list(self.levels())

    def haar_intervals(self):
        """Intervals that can carry a Haar function (levels 0..L-1)."""
        return list(self.levels(0, self.L - 1))

    def descendants(self, I, include_self=True, max_level=None):
        max_level = self.L if max_level is None else max_level
        out = [I] if include_self else []
        for k in range(I.k + 1, max_level + 1):
            s = I.n << (k - I.k)
            out.extend(DyadicInterval(k, s + j) for j in range(1 << (k - I.k)))
        return out

    # -- goodness -------------------------------------------------------------
    def deep_in(self, J, I, r=None, eps=None):
        """J is (r, eps)-deeply embedded in I."""
        r = self.r if r is None else r
        eps = self.eps if eps is None else _frac(eps)
        if not self.contains(I, J) or J.k - I.k < r:
            return False
        d = min(self.tlo(J) - self.tlo(I), self.thi(I) - self.thi(J))
        a, b = eps.numerator, eps.denominator
        # dist >= 1/2 lJ^eps lI^(1-eps)  <=>  (2 dist)^b >= lJ^a lI^(b-a)
        return (2 * d) ** b >= self.tlen(J) ** a * self.tlen(I) ** (b - a)

    def _is_good(self, J, r, eps):
        for I in self.ancestors(J):
            if J.k - I.k > r and not self.deep_in(J, I, r, eps):
                return False
        return True

    @cached_property
    def good_set(self):
        return frozenset(J for J in self.levels() if self._is_good(J, self.r, self.eps))

    def is_good(self, J, r=None, eps=None):
        if r is None and eps is None:
            return J in self.good_set
        r = self.r if r is None else r
        eps = self.eps if eps is None else _frac(eps)
        return self._is_good(J, r, eps)

    def is_child_good(self, J):
        if J.k >= self.L:
            return False
        a, b = self.children(J)
        return J in self.good_set and a in self.good_set and b in self.good_set

    @cached_property
    def child_good_set(self):
        return frozenset(J for J in self.levels(0, self.L - 1) if self.is_child_good(J))

    def goodness(self, J, mode, I=None, r=None, eps=None):
        if mode == "deep_in":
            if I is None or not self.contains(I, J):
                raise ValueError("deep_in needs J inside I")
            return self.deep_in(J, I, r, eps)
        if mode == "good":
            return self.is_good(J, r, eps)
        if mode == "child_good":
            return self.is_child_good(J)
        raise ValueError(f"unknown mode {mode!r}")

    # -- Whitney families -------------------------------------------------------
    def _maximal_below(self, F, pred):
        out = []
        stack = [F]
        while stack:
            I = stack.pop()
            if I.k >= self.L:
                continue
            for c in reversed(self.children(I)):
                if pred(c):
                    out.append(c)
                else:
                    stack.append(c)
        return sorted(out, key=self.tlo)

    def whitney(self, F, kind="deep", r=None, eps=None):
        self.check(F)
        if kind == "deep":
            return self._maximal_below(F, lambda W: self.deep_in(W, F, r, eps))
        if kind == "good_trip":
            lo, hi = self.tlo(F), self.thi(F)

            def trip(K):
                ell = self.tlen(K)
                return (self.is_good(K) and self.tlo(K) - ell >= lo
                        and self.thi(K) + ell <= hi)
            return self._maximal_below(F, trip)
        if kind == "good_tau":
            return self._maximal_below(
                F, lambda K: self.is_good(K) and self.deep_in(K, F, self.tau, eps))
        if kind == "nearby_tau":
            return self.descendants(F, max_level=min(self.L, F.k + self.tau))
        raise ValueError(f"unknown Whitney kind {kind!r}")


class AtomicMeasure:
    """Finite positive atomic measure; positions and masses kept exact."""

    def __init__(self, atoms=()):
        items = sorted((_frac(x), _frac(m)) for x, m in (atoms.items() if isinstance(atoms, dict) else atoms))
        for i, (x, m) in enumerate(items):
            if m <= 0:
                raise ValueError("atom masses must be positive")
            if i and items[i - 1][0] == x:
                raise ValueError(f"repeated atom position {x}")
        self.positions = tuple(x for x, _ in items)
        self.masses = tuple(m for _, m in items)
        self.x = np.array([float(x) for x in self.positions], dtype=float)
        self.w = np.array([float(m) for m in self.masses], dtype=float)

    def __len__(self):
        return len(self.positions)

    def __repr__(self):
        body = ", ".join(f"{x}:{m}" for x, m in zip(self.positions, self.masses))
        return f"AtomicMeasure({{{body}}})"

    def __eq__(self, other):
        return (isinstance(other, AtomicMeasure) and self.positions == other.positions
                and self.masses == other.masses)

    def __hash__(self):
        return hash((self.positions, self.masses))

    def irange(self, a, b):
        """Index range of atoms with a <= position < b."""
        return bisect_left(self.positions, _frac(a)), bisect_left(self.positions, _frac(b))

    def mass(self, a, b):
        i, j = self.irange(a, b)
        total = Fraction(0)
        for m in self.masses[i:j]:
            total += m
        return total

    def scaled(self, c):
        return AtomicMeasure([(x, m * _frac(c)) for x, m in zip(self.positions, self.masses)])


def mass(mu, a, b):
    if a > b:
        raise ValueError("need a <= b")
    return mu.mass(a, b)


class MeasurePair:
    """(sigma, omega) on a common grid, without common point masses."""

    def __init__(self, sigma, omega, grid, check_cells=True):
        self.sigma = sigma
        self.omega = omega
        self.grid = grid
        common = set(sigma.positions) & set(omega.positions)
        if common:
            raise CommonAtom(f"common atoms at {sorted(common)}")
        top = grid.hi(grid.top)
        for mu in (sigma, omega):
            if mu.positions and (mu.positions[0] < 0 or mu.positions[-1] >= top):
                raise OutOfGrid("atom outside the top interval")
            if check_cells:
                cells = [int(x / grid.scale) for x in mu.positions]
                if len(set(cells)) != len(cells):
                    raise ValueError("at most one atom of each measure per level-L cell")
        self._ranges = {}

    def __repr__(self):
        return f"MeasurePair({self.sigma!r}, {self.omega!r}, {self.grid!r})"

    def swapped(self):
        return MeasurePair(self.omega, self.sigma, self.grid, check_cells=False)

    def rng(self, side, I):
        """Atom index range of I for side 's' (sigma) or 'w' (omega)."""
        key = (side, I)
        got = self._ranges.get(key)
        if got is None:
            mu = self.sigma if side == "s" else self.omega
            got = mu.irange(self.grid.lo(I), self.grid.hi(I))
            self._ranges[key] = got
        return got
