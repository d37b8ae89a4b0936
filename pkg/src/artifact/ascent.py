"""Seeded multi-start maximization of log-ratios over positive weights."""
import numpy as np
from scipy.optimize import minimize

TINY = 1e-300


def maximize(fun_grad, starts, maxiter=10_000, tol=1e-10, bounds=None):
    """Maximize a log-ratio f over the given start points with L-BFGS-B.

    fun_grad(theta) -> (log value, gradient).  Returns (exp of the best log
    value, best theta, number of function evaluations)."""
    best_v, best_t, nfev = -np.inf, None, 0

    def neg(t):
        v, g = fun_grad(t)
        if not (np.isfinite(v) and np.all(np.isfinite(g))):
            return 1e300, np.zeros_like(t)
        return -v, -g

    with np.errstate(all="ignore"):
        for t0 in starts:
            t0 = np.asarray(t0, dtype=float)
            v0, _ = fun_grad(t0)
            nfev += 1
            if np.isfinite(v0) and v0 > best_v:
                best_v, best_t = v0, t0.copy()
            res = minimize(neg, t0, jac=True, method="L-BFGS-B", bounds=bounds,
                           options={"maxiter": maxiter, "ftol": tol, "gtol": 1e-12})
            nfev += res.nfev
            v, _ = fun_grad(res.x)
            if np.isfinite(v) and v > best_v:
                best_v, best_t = v, res.x.copy()
    return float(np.exp(best_v)), best_t, nfev


class QuadRatio:
    """phi(theta) = (1/q) [log sum_x wt (U b)^(q/2) - log sum_y ws (V b)^(q/2)],
    b = exp(theta).  U: (n_target, K), V: (n_source, K), both >= 0."""

    def __init__(self, U, V, wt, ws, q):
        self.U, self.V, self.wt, self.ws, self.q = U, V, wt, ws, q

    @staticmethod
    def _side(M, w, b, h):
        s = M @ b
        pos = s > 0
        sp = np.where(pos, s, 1.0)
        val = float(np.sum(np.where(pos, w * sp ** h, 0.0)))
        coef = np.where(pos, w * h * sp ** (h - 1), 0.0)
        return val, coef @ M

    def value_b(self, b):
        h = self.q / 2
        n, _ = self._side(self.U, self.wt, b, h)
        d, _ = self._side(self.V, self.ws, b, h)
        if d <= 0:
            return np.inf if n > 0 else 0.0
        return (n / d) ** (1 / self.q)

    def __call__(self, theta):
        b = np.exp(np.clip(theta, -700, 700))
        h = self.q / 2
        n, gn = self._side(self.U, self.wt, b, h)
        d, gd = self._side(self.V, self.ws, b, h)
        if n <= 0 or d <= 0:
            return -np.inf, np.zeros_like(theta)
        v = (np.log(n) - np.log(d)) / self.q
        g = (gn / n - gd / d) * b / self.q
        return v, g


def random_starts(rng, dim, restarts, scale=2.0, extra=()):
    starts = [np.asarray(e, dtype=float) for e in extra]
    starts.append(np.zeros(dim))
    while len(starts) < restarts:
        starts.append(rng.normal(0.0, scale, dim))
    return starts[:max(restarts, len(extra) + 1)]


def one_hot(dim, k, low=-30.0):
    t = np.full(dim, low)
    t[k] = 0.0
    return t
