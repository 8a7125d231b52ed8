"""Independent reference computations used by the tests.

Nothing here imports the package's solvers: each oracle is a separate route
to a quantity the package computes.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np
from scipy.stats import norm

INF = math.inf


# --- worked-example envelopes ----------------------------------------------
# Case formulas for the call, put and power families with f1 = base payoff and
# f2 = c * f1 + delta, written per family rather than from the general recipe.


def call_example(K, c, delta, x):
    """Returns ``(g, dplus, A, beta, m, rho)``; exit is at ``K`` from below."""
    m = 1.0
    if delta < K:
        A = K if delta > 0 else 0.0
        beta = delta / K
        rho = INF if c == 1 else K
        g = delta / K * x if x < K else x - K + delta
        if x < K:
            dplus = beta
        elif c == 1:
            dplus = 1.0
        else:
            dplus = 1.0
        return g, dplus, A, beta, m, rho
    # delta >= K: g(x) = x
    if c == 1 and delta > K:
        A, beta = INF, INF
    else:
        A, beta = K, delta / K
    rho = INF if c == 1 else K
    return x, 1.0, A, beta, m, rho


def put_example(K, c, delta, x):
    m = 0.0
    rho = INF
    if delta < K:
        A = K
        beta = (delta - K) / K
        g = K - (K - delta) / K * x if x < K else delta
        dplus = beta if x < K else 0.0
        return g, dplus, A, beta, m, rho
    A, beta = (K, 0.0) if delta == K else (INF, INF)
    return K, 0.0, A, beta, m, rho


def power_example(p, c, delta, x):
    m = INF
    rho = INF
    if delta > 0:
        A = (delta / (c * (p - 1))) ** (1 / p)
        beta = c * p * (delta / (c * (p - 1))) ** (1 - 1 / p)
    else:
        A, beta = 0.0, 0.0
    if x < A:
        return beta * x, beta, A, beta, m, rho
    return c * x**p + delta, c * p * x ** (p - 1), A, beta, m, rho


# --- double obstacle by plain time stepping ----------------------------------


def jacobi_envelope(f1, f2, d, n_iter=None, tol=1e-12):
    """Fixed point of ``max(f1, min(f2, mean of neighbours))`` by Jacobi steps from ``f1``.

    Same boundary rule as the package: left end pinned to ``f1``, right end
    extended with the last slope of ``f1``.
    """
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    slope = (f1[-1] - f1[-2]) / d
    h = f1.copy()
    n_iter = n_iter or 40 * f1.size**2
    for _ in range(n_iter):
        new = h.copy()
        new[1:-1] = np.maximum(f1[1:-1], np.minimum(f2[1:-1], 0.5 * (h[:-2] + h[2:])))
        new[0] = f1[0]
        new[-1] = new[-2] + slope * d
        if np.max(np.abs(new - h)) < tol:
            return new
        h = new
    return h


# --- Black-Scholes ---------------------------------------------------------


def bs_call(x, K, vol, T):
    if vol * math.sqrt(T) == 0:
        return max(x - K, 0.0)
    s = vol * math.sqrt(T)
    d1 = (math.log(x / K) + 0.5 * s * s) / s
    return x * norm.cdf(d1) - K * norm.cdf(d1 - s)


# --- martingale polytope by vertex enumeration --------------------------------


def vertex_enumeration_max(A, b, c, tol=1e-9):
    """``max c.q`` over ``{q >= 0, A q = b}`` by trying every basis.

    Returns ``None`` when the polytope is empty.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    # drop dependent rows
    keep = []
    for i in range(A.shape[0]):
        trial = keep + [i]
        if np.linalg.matrix_rank(A[trial], tol=1e-10) == len(trial):
            keep.append(i)
    A, b = A[keep], b[keep]
    r, n = A.shape
    best = None
    for cols in combinations(range(n), r):
        Bm = A[:, cols]
        if abs(np.linalg.det(Bm)) < 1e-12:
            continue
        qb = np.linalg.solve(Bm, b)
        if np.any(qb < -tol) or np.max(np.abs(Bm @ qb - b)) > 1e-8:
            continue
        q = np.zeros(n)
        q[list(cols)] = qb
        val = float(c @ q)
        if best is None or val > best:
            best = val
    return best


def tree_martingale_system(paths):
    """Rows ``sum q = 1`` and one conditional-mean row per internal node, from raw paths."""
    paths = np.asarray(paths, dtype=float)
    n_paths, n_cols = paths.shape
    rows = [np.ones(n_paths)]
    rhs = [1.0]
    for t in range(n_cols - 1):
        prefixes = {}
        for j, row in enumerate(paths):
            prefixes.setdefault(tuple(row[: t + 1]), []).append(j)
        for prefix, idx in prefixes.items():
            r = np.zeros(n_paths)
            r[idx] = paths[idx, t + 1] - prefix[-1]
            if np.any(r != 0) or len(set(paths[idx, t + 1])) > 1:
                rows.append(r)
                rhs.append(0.0)
    return np.array(rows), np.array(rhs)


# --- Ornstein-Uhlenbeck ------------------------------------------------------


def ou_recursion(dB, dt, lam):
    """``U_{k+1} = e^{-lam dt} U_k + e^{-lam dt / 2} dB_k`` (midpoint weight on each increment)."""
    n_paths, n = dB.shape
    U = np.zeros((n_paths, n + 1))
    a = math.exp(-lam * dt)
    w = math.exp(-0.5 * lam * dt)
    for k in range(n):
        U[:, k + 1] = a * U[:, k] + w * dB[:, k]
    return U


def ou_variance(lam, t):
    return (1 - math.exp(-2 * lam * t)) / (2 * lam)


def fbm_cov(H, s, t):
    return 0.5 * (s ** (2 * H) + t ** (2 * H) - abs(t - s) ** (2 * H))


# --- coupling ------------------------------------------------------------------


def two_point_interpolation(w, t, T=1.0):
    """Brownian martingale ending at 120 if the increment over [0, T] is positive, else 80."""
    return 80.0 + 40.0 * norm.cdf(w / math.sqrt(T - t))


BINOMIAL_2STEP = {
    (100.0, 80.0, 64.0): 0.25,
    (100.0, 80.0, 96.0): 0.25,
    (100.0, 120.0, 96.0): 0.25,
    (100.0, 120.0, 144.0): 0.25,
}
