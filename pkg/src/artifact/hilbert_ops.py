"""Hilbert transform of atomic measures, Poisson integrals and the pointwise
comparison inequalities between them."""
from fractions import Fraction

import numpy as np

from .haar import HaarSystem, _vals
from .measure_grid import CommonAtom


def hilbert_at(sigma, f, x):
    """pv sum_y f(y) sigma(y) / (y - x); only an exact self-atom is dropped."""
    f = np.asarray(_vals(f), dtype=float)
    x = Fraction(x)
    total = 0.0
    for y, yf, m, v in zip(sigma.positions, sigma.x, sigma.w, f):
        if y != x:
            total += v * m / float(y - x)
    return total


def kernel_matrix(sigma, omega):
    """A[i, j] = sigma_j / (y_j - x_i), rows indexed by omega atoms."""
    if set(sigma.positions) & set(omega.positions):
        raise CommonAtom("measures share an atom")
    diff = sigma.x[None, :] - omega.x[:, None]
    return sigma.w[None, :] / diff


def hilbert_on(sigma, f, omega):
    """H_sigma f evaluated at every omega atom."""
    return kernel_matrix(sigma, omega) @ np.asarray(_vals(f), dtype=float)


def bilinear_form(pair, f, g, restrict=None):
    """<H_sigma f, g>_omega, or the sum over a set of Haar pairs (I, J)."""
    sig, om = pair.sigma, pair.omega
    A = kernel_matrix(sig, om)
    f = np.asarray(_vals(f), dtype=float)
    g = np.asarray(_vals(g), dtype=float)
    if restrict is None:
        return float(np.sum((A @ f) * g * om.w))
    hs = HaarSystem(pair.grid, sig)
    hw = HaarSystem(pair.grid, om)
    df, dg = hs.differences(f), hw.differences(g)
    total = 0.0
    for I, J in sorted(restrict):
        a = hs.delta(f, I, df)
        b = hw.delta(g, J, dg)
        total += float(np.sum((A @ a) * b * om.w))
    return total


def poisson(grid, J, positions, weights):
    """P(J, nu) = sum l(J) / (l(J) + |y - c_J|)^2 nu(y)."""
    ell = float(grid.length(J))
    c = float(grid.center(J))
    y = np.asarray(positions, dtype=float)
    w = np.asarray(weights, dtype=float)
    return float(np.sum(ell / (ell + np.abs(y - c)) ** 2 * w))


def poisson_exact(grid, J, positions, weights):
    ell = grid.length(J)
    c = grid.center(J)
    total = Fraction(0)
    for y, w in zip(positions, weights):
        total += ell / (ell + abs(Fraction(y) - c)) ** 2 * Fraction(w)
    return total


def restrict_measure(mu, grid, inside=(), outside=()):
    """Atoms of mu lying in every interval of `inside` and in none of `outside`."""
    keep = []
    for y, m in zip(mu.positions, mu.masses):
        if all(grid.lo(I) <= y < grid.hi(I) for I in inside) and not any(
                grid.lo(I) <= y < grid.hi(I) for I in outside):
            keep.append((y, m))
    return keep


def monotonicity_ratio(pair, J, nu):
    """|<H nu, h_J>| / ((P(J,nu)/l(J)) |<Z, h_J>|) for atoms nu = [(y, m)].

    Returns None when the ratio is undefined (degenerate J, empty nu)."""
    g = pair.grid
    hw = HaarSystem(g, pair.omega)
    h, degen = hw.haar_function(J)
    if degen or not nu:
        return None
    ys = np.array([float(y) for y, _ in nu])
    ms = np.array([float(m) for _, m in nu])
    x = pair.omega.x
    Hnu = ((ms[None, :]) / (ys[None, :] - x[:, None])).sum(axis=1)
    lhs = abs(float(np.sum(Hnu * h * pair.omega.w)))
    zc = abs(float(np.sum(x * h * pair.omega.w)))
    P = poisson(g, J, ys, ms)
    den = P / float(g.length(J)) * zc
    if den == 0:
        return None
    return lhs / den


def off_double(grid, J, nu):
    """Restrict atoms to the complement of 2J."""
    c, ell = grid.center(J), grid.length(J)
    return [(y, m) for y, m in nu if abs(Fraction(y) - c) >= ell]


def pointwise_haar_hilbert(pair, J, K):
    """max_x |Delta_J^omega H(1_K sigma)(x)| and P(J, 1_K sigma)."""
    g = pair.grid
    nu = restrict_measure(pair.sigma, g, inside=[K])
    hw = HaarSystem(g, pair.omega)
    h, degen = hw.haar_function(J)
    if degen or not nu:
        return 0.0, 0.0
    ys = np.array([float(y) for y, _ in nu])
    ms = np.array([float(m) for _, m in nu])
    x = pair.omega.x
    Hnu = (ms[None, :] / (ys[None, :] - x[:, None])).sum(axis=1)
    c = float(np.sum(Hnu * h * pair.omega.w))
    return float(np.max(np.abs(c * h))), poisson(g, J, ys, ms)


def poisson_decay_ratio(grid, J, I, K, mu):
    """P(J, mu 1_{K\\I}) / ((lJ/lI)^(1-2 eps) P(I, mu 1_{K\\I})) with eps = 1/8."""
    nu = restrict_measure(mu, grid, inside=[K], outside=[I])
    if not nu:
        return None
    ys = [y for y, _ in nu]
    ms = [m for _, m in nu]
    pj = poisson(grid, J, ys, ms)
    pi = poisson(grid, I, ys, ms)
    q = (float(grid.length(J)) / float(grid.length(I))) ** (1 - 2 * 0.125)
    return pj / (q * pi)


def decay_hypothesis(grid, J, I, eps=Fraction(1, 8)):
    """dist(J, dI) > 2 l(J)^eps l(I)^(1-eps), checked exactly in ticks."""
    if not grid.contains(I, J) or J == I:
        return False
    d = min(grid.tlo(J) - grid.tlo(I), grid.thi(I) - grid.thi(J))
    a, b = eps.numerator, eps.denominator
    return d ** b > 2 ** b * grid.tlen(J) ** a * grid.tlen(I) ** (b - a)


def _hilbert_exact(atoms, x):
    return sum((m / (y - x) for y, m in atoms), Fraction(0))


def energy_reversal_check(grid, sigma, I, Ir, points):
    """Exact check of (P(Ir, 1_{I\\Ir} sigma)/l(Ir)) (x - y) <= 2 [H(x) - H(y)]
    for all y < x from `points` inside Ir.  Returns (ok, worst slack)."""
    nu = restrict_measure(sigma, grid, inside=[I], outside=[Ir])
    pts = sorted(Fraction(t) for t in points if grid.lo(Ir) <= Fraction(t) < grid.hi(Ir))
    if not nu or len(pts) < 2:
        return True, None
    P = poisson_exact(grid, Ir, [y for y, _ in nu], [m for _, m in nu]) / grid.length(Ir)
    H = {t: _hilbert_exact(nu, t) for t in pts}
    worst = None
    ok = True
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            y, x = pts[a], pts[b]
            slack = 2 * (H[x] - H[y]) - P * (x - y)
            if slack < 0:
                ok = False
            worst = slack if worst is None else min(worst, slack)
    return ok, worst


def omega_median(omega, grid, I):
    """Smallest atom of I with cumulative omega-mass >= half of |I|_omega."""
    i, j = omega.irange(grid.lo(I), grid.hi(I))
    if j <= i:
        return None
    half = sum(omega.masses[i:j], Fraction(0)) / 2
    acc = Fraction(0)
    for t in range(i, j):
        acc += omega.masses[t]
        if acc >= half:
            return omega.positions[t]
    return omega.positions[j - 1]


def averaged_reversal_check(pair, I, Ir):
    """Median-split averaged reversal: for omega atoms x above the median c,
    (P/l)(x - E_- Z) <= 2 (H(x) - E_- H), the average over atoms <= c."""
    g = pair.grid
    om = pair.omega
    c = omega_median(om, g, Ir)
    nu = restrict_measure(pair.sigma, g, inside=[I], outside=[Ir])
    if c is None or not nu:
        return True, None
    i, j = om.irange(g.lo(Ir), g.hi(Ir))
    lower = [t for t in range(i, j) if om.positions[t] <= c]
    upper = [t for t in range(i, j) if om.positions[t] > c]
    if not upper:
        return True, None
    P = poisson_exact(g, Ir, [y for y, _ in nu], [m for _, m in nu]) / g.length(Ir)
    wl = sum((om.masses[t] for t in lower), Fraction(0))
    EZ = sum((om.masses[t] * om.positions[t] for t in lower), Fraction(0)) / wl
    EH = sum((om.masses[t] * _hilbert_exact(nu, om.positions[t]) for t in lower), Fraction(0)) / wl
    ok, worst = True, None
    for t in upper:
        x = om.positions[t]
        slack = 2 * (_hilbert_exact(nu, x) - EH) - P * (x - EZ)
        ok = ok and slack >= 0
        worst = slack if worst is None else min(worst, slack)
    return ok, worst
