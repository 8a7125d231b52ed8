"""The game concave envelope ``g``.

``g`` is the smallest continuous ``h`` with ``f1 <= h <= f2`` that is concave on
every interval where ``h < f2``.  For convex payoffs it has a closed form built
from four numbers ``(A, beta, m, rho)``; for anything else we solve the discrete
double-obstacle problem

    h = max(f1, min(f2, (h(x - d) + h(x + d)) / 2))

on a uniform price grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .payoff import GamePayoffPair, Power, _PiecewiseLinear

INF = math.inf

__all__ = [
    "ConvexEnvelopeParams",
    "ClosedFormEnvelope",
    "EnvelopeResult",
    "EnvelopeConvergenceError",
    "convex_params",
    "g_closed_form",
    "g_grid",
    "right_derivative",
    "stop_interval",
    "envelope_for",
    "default_domain",
]


class EnvelopeConvergenceError(RuntimeError):
    def __init__(self, msg: str, last_change: float):
        super().__init__(f"{msg} (last sup-change {last_change:.3e})")
        self.last_change = last_change


@dataclass(frozen=True)
class ConvexEnvelopeParams:
    A: float
    beta: float
    m: float
    rho: float
    f1_zero: float


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * (1.0 + abs(a) + abs(b))


def convex_params(pair: GamePayoffPair) -> ConvexEnvelopeParams:
    """Threshold ``A``, initial slope ``beta``, asymptotic slope ``m`` and crossing ``rho``.

    Raises ``ValueError`` unless both payoffs are convex.
    """
    f1, f2 = pair.f1, pair.f2
    if not (f1.is_convex() and f2.is_convex()):
        raise ValueError("closed-form envelope needs convex f1 and f2")
    if isinstance(f1, Power) and not isinstance(f2, Power):
        raise ValueError("superlinear f1 cannot stay below a piecewise-linear f2")

    a1, a2 = f1.at_zero(), f2.at_zero()
    m = f1.asymptotic_slope()

    if isinstance(f2, Power):
        gap = a2 - a1
        if _close(a1, a2) or gap <= 0:
            A, beta = 0.0, float(f2.slope_right(0.0))
        else:
            A = (gap / (f2.c * (f2.p - 1.0))) ** (1.0 / f2.p)
            beta = f2.c * f2.p * A ** (f2.p - 1.0)
        if m == INF:
            rho = INF
        elif m < 0:
            rho = 0.0
        else:
            rho = (m / (f2.c * f2.p)) ** (1.0 / (f2.p - 1.0))
        return ConvexEnvelopeParams(A, beta, m, rho, a1)

    starts, slopes, _ = f2.pieces()
    knot_vals = f2.value_at_knots()
    if _close(a1, a2):
        A, beta = 0.0, float(slopes[0])
    else:
        # on a linear piece, f2(y) - f1(0) - y f2'(y+) is constant
        ok = knot_vals - a1 <= slopes * starts + 1e-12 * (1.0 + np.abs(knot_vals))
        ok[0] = False
        hits = np.nonzero(ok)[0]
        if hits.size:
            A = float(starts[hits[0]])
            beta = (float(knot_vals[hits[0]]) - a1) / A
        else:
            A, beta = INF, INF
    if m == INF:
        rho = INF
    else:
        steep = np.nonzero(slopes > m + 1e-12 * (1.0 + abs(m)))[0]
        rho = float(starts[steep[0]]) if steep.size else INF
    return ConvexEnvelopeParams(A, beta, m, rho, a1)


def g_closed_form(params: ConvexEnvelopeParams, pair: GamePayoffPair, x):
    """Closed-form ``g`` for convex payoffs (scalar or array ``x > 0``)."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise ValueError("g is evaluated at positive prices only")
    p = params
    if p.m <= p.beta:
        out = p.f1_zero + p.m * xa
    else:
        f2 = pair.f2
        lin = p.f1_zero + p.beta * xa if p.A > 0 else np.full_like(xa, np.nan)
        mid = f2(xa)
        if p.rho < INF:
            tail = f2(p.rho) + p.m * (xa - p.rho) if p.rho > 0 else p.f1_zero + p.m * xa
        else:
            tail = mid
        out = np.where(xa < p.A, lin, np.where(xa < p.rho, mid, tail))
    return float(out) if out.ndim == 0 else out


def _closed_contact(params: ConvexEnvelopeParams, pair: GamePayoffPair) -> tuple[float, float] | None:
    """Closed interval on which ``g == f2`` (``None`` if empty)."""
    p, f2 = params, pair.f2
    if p.beta < p.m:
        lo = p.A
        hi = p.rho
        if lo > hi:
            return None
        return (lo, hi)
    # g is affine; f2 - g is convex and non-negative
    if isinstance(f2, _PiecewiseLinear):
        starts, slopes, _ = f2.pieces()
        gap = f2.value_at_knots() - (p.f1_zero + p.m * starts)
        scale = 1e-12 * (1.0 + np.abs(f2.value_at_knots()))
        zero = np.abs(gap) <= scale
        if not zero.any():
            return None
        idx = np.nonzero(zero)[0]
        lo, hi = float(starts[idx[0]]), float(starts[idx[-1]])
        if idx[-1] + 1 < starts.size:
            if _close(float(slopes[idx[-1]]), p.m):
                hi = float(starts[idx[-1] + 1])
        elif _close(float(slopes[-1]), p.m):
            hi = INF
        return (lo, hi)
    # strictly convex power f2 touches the line at most once
    xs = (p.m / (f2.c * f2.p)) ** (1.0 / (f2.p - 1.0)) if p.m > 0 else 0.0
    if xs > 0 and _close(float(f2(xs)), p.f1_zero + p.m * xs):
        return (xs, xs)
    return None


def _interval_from_contact(contact, x: float) -> tuple[float, float] | None:
    if contact is None:
        return (-INF, INF)
    lo, hi = contact
    if lo <= x <= hi:
        return None
    return (-INF, lo) if x < lo else (hi, INF)


class ClosedFormEnvelope:
    """``g`` for a convex pair, evaluated exactly."""

    def __init__(self, pair: GamePayoffPair, params: ConvexEnvelopeParams | None = None):
        self.pair = pair
        self.params = params if params is not None else convex_params(pair)
        self.contact = _closed_contact(self.params, pair)

    def value(self, x):
        return g_closed_form(self.params, self.pair, x)

    def right_derivative(self, x: float) -> float:
        if not x > 0:
            raise ValueError("right derivative requested at non-positive price")
        p = self.params
        if p.m <= p.beta:
            return p.m
        if x < p.A:
            return p.beta
        if x < p.rho:
            return float(self.pair.f2.slope_right(x))
        return p.m

    def in_contact(self, x: float) -> bool:
        c = self.contact
        return c is not None and c[0] <= x <= c[1]

    def stop_interval(self, x: float) -> tuple[float, float] | None:
        return _interval_from_contact(self.contact, x)


@dataclass(frozen=True)
class EnvelopeResult:
    """Grid envelope: values, forward-difference slopes and the contact mask."""

    xs: np.ndarray
    g: np.ndarray
    dplus: np.ndarray
    stop_mask: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    tol: float
    iterations: int
    method: str
    convex_params: ConvexEnvelopeParams | None = None

    @property
    def step(self) -> float:
        return float(self.xs[1] - self.xs[0])

    def _check(self, x: float):
        if not (self.xs[0] <= x <= self.xs[-1]):
            raise ValueError(f"price {x} outside envelope grid [{self.xs[0]}, {self.xs[-1]}]")

    def value(self, x):
        xa = np.asarray(x, dtype=float)
        if np.any((xa < self.xs[0]) | (xa > self.xs[-1])):
            raise ValueError("price outside envelope grid")
        out = np.interp(xa, self.xs, self.g)
        return float(out) if out.ndim == 0 else out

    def _node(self, x: float) -> int:
        i = int(np.searchsorted(self.xs, x, side="right") - 1)
        return min(max(i, 0), self.xs.size - 2)

    def right_derivative(self, x: float) -> float:
        self._check(x)
        i = self._node(x)
        return float((self.g[i + 1] - self.g[i]) / (self.xs[i + 1] - self.xs[i]))

    def in_contact(self, x: float) -> bool:
        self._check(x)
        f2x = np.interp(x, self.xs, self.f2)
        return bool(abs(self.value(x) - f2x) <= 10 * self.tol * (1.0 + abs(f2x)))

    def stop_interval(self, x: float) -> tuple[float, float] | None:
        self._check(x)
        if self.in_contact(x):
            return None
        below = np.nonzero(self.stop_mask & (self.xs <= x))[0]
        above = np.nonzero(self.stop_mask & (self.xs >= x))[0]
        lo = float(self.xs[below[-1]]) if below.size else -INF
        hi = float(self.xs[above[0]]) if above.size else INF
        return (lo, hi)


def default_domain(pair: GamePayoffPair, s0: float, n_points: int | None = None) -> tuple[float, float]:
    """``[1e-6 s0, 10 * max(s0, largest kink)]``, kink-aligned when ``n_points`` is given.

    The left end is pinned to ``f1`` so it sits far below ``s0``.  With
    ``n_points`` the right end is stretched (by less than one step per step to
    the kink) so that the kink closest to ``s0`` lands on a grid node; a contact
    point between nodes otherwise costs an error of order one step.
    """
    lo = 1e-6 * s0
    hi = 10.0 * max([s0, *pair.kinks])
    inside = [k for k in pair.kinks if lo < k < hi]
    if n_points is None or not inside:
        return lo, hi
    k = min(inside, key=lambda z: abs(math.log(z / s0)))
    j = int((k - lo) / ((hi - lo) / (n_points - 1)))
    if j >= 1:
        hi = lo + (n_points - 1) * (k - lo) / j
    return lo, hi


def _apply_T(h, f1, f2, slope_hi, d):
    out = h.copy()
    out[1:-1] = np.maximum(f1[1:-1], np.minimum(f2[1:-1], 0.5 * (h[:-2] + h[2:])))
    out[0] = f1[0]
    out[-1] = out[-2] + slope_hi * d
    return out


def _solve_active_set(f1, f2, slope_hi, d, tol, max_iter):
    """Primal-dual active set for the discrete double-obstacle problem.

    Returns the fixed point of the monotone operator; with the absorbing left end
    it is unique, hence equal to the limit of the iteration started at ``f1``.
    Points where an obstacle and the free equation agree up to rounding are
    classified free, which keeps degenerate stretches (``f2`` linear) from
    flickering between sets.  Rounding can still leave a two-cycle of sets
    around an already converged iterate, so the operator residual is the
    stopping rule and a repeated set is only a fallback.
    """
    n = f1.size
    h = f1.copy()
    lam = np.zeros(n)
    eps = 1e-11 * (1.0 + np.abs(f2))
    prev = None
    for it in range(1, max_iter + 1):
        lam[1:-1] = h[1:-1] - 0.5 * (h[:-2] + h[2:])
        lower = np.zeros(n, bool)
        upper = np.zeros(n, bool)
        lower[1:-1] = lam[1:-1] + (f1[1:-1] - h[1:-1]) > eps[1:-1]
        upper[1:-1] = lam[1:-1] + (f2[1:-1] - h[1:-1]) < -eps[1:-1]
        upper &= ~lower
        state = (lower.tobytes(), upper.tobytes())
        if it > 1:
            h = np.clip(h, f1, f2)
            res = float(np.max(np.abs(_apply_T(h, f1, f2, slope_hi, d) - h)))
            if res <= tol or state == prev:
                return h, it
        prev = state
        ab = np.zeros((3, n))
        rhs = np.zeros(n)
        ab[1, 0] = 1.0
        rhs[0] = f1[0]
        ab[1, -1] = 1.0
        ab[2, -2] = -1.0
        rhs[-1] = slope_hi * d
        idx = np.arange(1, n - 1)
        fixed = lower[1:-1] | upper[1:-1]
        ab[1, idx] = 1.0
        ab[0, idx + 1] = np.where(fixed, 0.0, -0.5)
        ab[2, idx - 1] = np.where(fixed, 0.0, -0.5)
        rhs[1:-1] = np.where(lower[1:-1], f1[1:-1], np.where(upper[1:-1], f2[1:-1], 0.0))
        h = solve_banded((1, 1), ab, rhs)
    raise EnvelopeConvergenceError("active-set iteration did not settle", float("nan"))


def _solve_sweeps(f1, f2, slope_hi, d, tol, max_iter):
    """Red-black Gauss-Seidel sweeps of the monotone operator, started from ``f1``."""
    h = f1.copy()
    h[-1] = h[-2] + slope_hi * d
    odd = slice(1, h.size - 1, 2)
    even = slice(2, h.size - 1, 2)
    change = INF
    for it in range(1, max_iter + 1):
        old = h.copy()
        for sl in (odd, even):
            lo = slice(sl.start - 1, sl.stop - 1, 2)
            hi = slice(sl.start + 1, sl.stop + 1, 2)
            avg = 0.5 * (h[lo] + h[hi][: h[sl].size])
            h[sl] = np.maximum(f1[sl], np.minimum(f2[sl], avg))
        h[-1] = h[-2] + slope_hi * d
        if np.any(h < old - 1e-12 * (1.0 + np.abs(old))):
            raise AssertionError("monotone sweep decreased the iterate")
        change = float(np.max(np.abs(h - old)))
        if change < tol:
            return h, it
    raise EnvelopeConvergenceError("sweep iteration hit the iteration cap", change)


def g_grid(
    pair: GamePayoffPair,
    domain: tuple[float, float],
    n_points: int = 4096,
    tol: float = 1e-9,
    method: str = "active-set",
    max_iter: int | None = None,
) -> EnvelopeResult:
    """Solve the discrete double-obstacle problem on a uniform grid.

    Left end is pinned to ``f1(x_min)``; the right end carries the one-sided
    slope of ``f1`` at ``x_max``.  ``method="sweep"`` runs the plain monotone
    iteration from ``f1`` (slow, O(n^2) sweeps); ``"active-set"`` reaches the same
    fixed point directly and is certified by one application of the operator.
    """
    x_min, x_max = map(float, domain)
    if not (0 < x_min < x_max):
        raise ValueError("domain must satisfy 0 < x_min < x_max")
    if n_points < 16:
        raise ValueError("need at least 16 grid points")
    xs = np.linspace(x_min, x_max, n_points)
    d = float(xs[1] - xs[0])
    f1 = np.asarray(pair.f1(xs), dtype=float)
    f2 = np.asarray(pair.f2(xs), dtype=float)
    slope_hi = (f1[-1] - float(pair.f1(x_max - d))) / d
    cap = max_iter if max_iter is not None else 10 * n_points**2

    if method == "active-set":
        scale = 1.0 + float(np.max(np.abs(f2)))
        h, iters = _solve_active_set(f1, f2, slope_hi, d, tol * scale, min(cap, 10 * n_points))
        residual = float(np.max(np.abs(_apply_T(h, f1, f2, slope_hi, d) - h)))
        if residual > tol * scale:
            raise EnvelopeConvergenceError("active-set solution is not a fixed point", residual)
    elif method == "sweep":
        h, iters = _solve_sweeps(f1, f2, slope_hi, d, tol, cap)
    else:
        raise ValueError(f"unknown method {method!r}")

    dplus = np.empty_like(h)
    dplus[:-1] = np.diff(h) / d
    dplus[-1] = slope_hi
    stop = np.abs(h - f2) <= 10 * tol * (1.0 + np.abs(f2))
    params = None
    if pair.is_convex():
        try:
            params = convex_params(pair)
        except ValueError:
            params = None
    return EnvelopeResult(xs, h, dplus, stop, f1, f2, tol, iters, method, params)


def right_derivative(env, x: float) -> float:
    """``g'(x+)`` from a grid result or a closed-form envelope."""
    if isinstance(env, ConvexEnvelopeParams):
        raise TypeError("wrap params in ClosedFormEnvelope(pair, params)")
    return env.right_derivative(x)


def stop_interval(env, x: float) -> tuple[float, float] | None:
    """``K_x`` as ``(lo, hi)`` with infinite ends allowed; ``None`` when ``g(x) = f2(x)``."""
    return env.stop_interval(x)


def envelope_for(pair: GamePayoffPair, s0: float, n_points: int = 4096):
    """Closed form when both payoffs are convex, otherwise the grid solver."""
    if pair.is_convex():
        try:
            return ClosedFormEnvelope(pair)
        except ValueError:
            pass
    return g_grid(pair, default_domain(pair, s0, n_points), n_points)
