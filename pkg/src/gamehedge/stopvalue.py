"""Optimal stopping under volatility uncertainty on an explicit log-price lattice.

``G(x, u)`` is the value of a game in which one side picks the volatility in
``[v_lo, v_hi]`` to push the value up and the other stops early for ``f2`` or
waits for ``f1`` at the horizon ``u``.  Backward induction in ``y = ln x``:

    V_n = f1,   V_k = min(f2, V_{k+1} + dt v^2/2 (D2 - D1) V_{k+1}),

with ``v = v_hi`` where ``D2 - D1 > 0`` and ``v_lo`` elsewhere.  As ``v_hi`` grows
the value at ``x0`` approaches ``g(x0)`` from below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .payoff import GamePayoffPair

__all__ = [
    "LatticeSpec",
    "ValueSurface",
    "FeedbackTable",
    "solve_g_lattice",
    "horizon_invariance_gap",
    "extract_feedback_vol",
    "default_lattice",
]


@dataclass(frozen=True)
class LatticeSpec:
    """Uniform log-price grid on ``[ln x_min, ln x_max]`` and an explicit time grid.

    ``n_t`` defaults to the smallest count meeting ``dt <= dy^2 / v_hi^2``.
    ``n_store`` time slices (evenly spaced, including both ends) are kept.
    """

    x_min: float
    x_max: float
    n_y: int = 1200
    u: float = 1.0
    v_lo: float = 1e-3
    v_hi: float = 6.0
    n_t: int | None = None
    n_store: int = 65

    def __post_init__(self):
        if not 0 < self.x_min < self.x_max:
            raise ValueError("need 0 < x_min < x_max")
        if self.n_y < 8:
            raise ValueError("need at least 8 log-price nodes")
        if not self.u > 0:
            raise ValueError("horizon must be positive")
        if not (0 <= self.v_lo < self.v_hi):
            raise ValueError("need 0 <= v_lo < v_hi")
        if self.n_t is not None and self.dt > self.dy**2 / self.v_hi**2 * (1 + 1e-12):
            raise ValueError(f"CFL violated: dt={self.dt:.3e} > dy^2/v_hi^2={self.dy**2 / self.v_hi**2:.3e}")

    @property
    def dy(self) -> float:
        return (math.log(self.x_max) - math.log(self.x_min)) / (self.n_y - 1)

    @property
    def steps(self) -> int:
        if self.n_t is not None:
            return int(self.n_t)
        return max(1, math.ceil(self.u * self.v_hi**2 / self.dy**2))

    @property
    def dt(self) -> float:
        return self.u / self.steps

    def ys(self) -> np.ndarray:
        return np.linspace(math.log(self.x_min), math.log(self.x_max), self.n_y)

    def replace(self, **kw) -> "LatticeSpec":
        return LatticeSpec(**{**self.__dict__, **kw})


def default_lattice(x0: float, kinks=(), **kw) -> LatticeSpec:
    """``[x0/8000, 37.5 x0]`` with 1600 nodes, kink-aligned when ``kinks`` are given.

    The wide bottom matters for puts: at ``v_hi = 6`` most of the mass ends far
    below ``x0``.  The top is stretched slightly so that the kink closest to
    ``x0`` (in log distance) is a node; a kink between nodes shifts the value
    by an amount of order ``dy`` times the kink.
    """
    kw.setdefault("n_y", 1600)
    lo, hi = x0 / 8000.0, 37.5 * x0
    inside = [k for k in kinks if lo < k < hi]
    if inside:
        k = min(inside, key=lambda z: abs(math.log(z / x0)))
        dy = (math.log(hi) - math.log(lo)) / (kw["n_y"] - 1)
        j = int((math.log(k) - math.log(lo)) / dy)
        if j >= 1:
            hi = lo * math.exp((kw["n_y"] - 1) * (math.log(k) - math.log(lo)) / j)
    return LatticeSpec(lo, hi, **kw)


@numba.njit(cache=True)
def _backward(f1, f2, s1_hi, xs, dt, dy, n_t, vlo2, vhi2, store_at, V_store, hi_store):
    n = f1.size
    V = f1.copy()
    new = np.empty(n)
    a2 = 0.5 * dt / (dy * dy)
    a1 = 0.25 * dt / dy
    slot = store_at.size - 1
    if store_at[slot] == n_t:
        V_store[slot, :] = V
        slot -= 1
    for k in range(n_t - 1, -1, -1):
        rec = slot >= 0 and store_at[slot] == k
        for i in range(1, n - 1):
            d2 = V[i + 1] - 2.0 * V[i] + V[i - 1]
            d1 = V[i + 1] - V[i - 1]
            curv = a2 * d2 - a1 * d1
            up = curv > 0.0
            v2 = vhi2 if up else vlo2
            val = V[i] + v2 * curv
            new[i] = val if val < f2[i] else f2[i]
            if rec:
                hi_store[slot, i] = up
        lo = new[1] + (new[1] - new[2]) * (xs[1] - xs[0]) / (xs[2] - xs[1])
        lo = min(max(lo, f1[0]), f2[0])
        hi = new[n - 2] + s1_hi * (xs[n - 1] - xs[n - 2])
        hi = min(max(hi, f1[n - 1]), f2[n - 1])
        new[0] = lo
        new[n - 1] = hi
        for i in range(n):
            V[i] = new[i]
        if rec:
            V_store[slot, :] = V
            hi_store[slot, 0] = hi_store[slot, 1]
            hi_store[slot, n - 1] = hi_store[slot, n - 2]
            slot -= 1
    return V


@dataclass(frozen=True)
class ValueSurface:
    """Stored time slices of ``V`` and the maximizing volatility.

    ``times[j]`` is the calendar time of slice ``j`` (``0`` first, ``u`` last).
    """

    times: np.ndarray
    ys: np.ndarray
    V: np.ndarray
    feedback_vol: np.ndarray
    spec: LatticeSpec
    f1: np.ndarray = field(repr=False)
    f2: np.ndarray = field(repr=False)

    @property
    def xs(self) -> np.ndarray:
        return np.exp(self.ys)

    def value_at(self, x: float, slice_index: int = 0) -> float:
        """Linear interpolation in price, exact for payoffs that are piecewise linear in price."""
        xs = self.xs
        if not xs[0] * (1 - 1e-12) <= x <= xs[-1] * (1 + 1e-12):
            raise ValueError("price outside lattice")
        return float(np.interp(x, xs, self.V[slice_index]))


def solve_g_lattice(pair: GamePayoffPair, spec: LatticeSpec) -> ValueSurface:
    """Backward induction for the stopping game with volatility in ``[v_lo, v_hi]``.

    The top node extrapolates linearly in price with ``f1``'s slope there; the
    bottom node extrapolates the two nodes above it, since ``f1``'s slope near
    zero need not be ``g``'s and a mismatch would be pumped in at every step.
    Both are clamped to ``[f1, f2]``.
    """
    ys = spec.ys()
    xs = np.exp(ys)
    f1 = np.asarray(pair.f1(xs), dtype=float)
    f2 = np.asarray(pair.f2(xs), dtype=float)
    if not (np.all(np.isfinite(f1)) and np.all(np.isfinite(f2))):
        raise ValueError("payoffs are not finite on the lattice")
    n_t = spec.steps
    if spec.dt > spec.dy**2 / spec.v_hi**2 * (1 + 1e-12):
        raise ValueError("CFL violated")
    store_at = np.unique(np.round(np.linspace(0, n_t, min(spec.n_store, n_t + 1))).astype(np.int64))
    V_store = np.empty((store_at.size, xs.size))
    hi_store = np.zeros((store_at.size, xs.size), dtype=np.bool_)
    s1_hi = (f1[-1] - f1[-2]) / (xs[-1] - xs[-2])
    _backward(
        f1, f2, s1_hi, xs, spec.dt, spec.dy, n_t, spec.v_lo**2, spec.v_hi**2, store_at, V_store, hi_store
    )
    fb = np.where(hi_store, spec.v_hi, spec.v_lo)
    # terminal slice has no control; report v_lo there
    return ValueSurface(store_at * spec.dt, ys, V_store, fb, spec, f1, f2)


def horizon_invariance_gap(pair: GamePayoffPair, spec: LatticeSpec, u1: float, u2: float, x0: float) -> float:
    """``|V_{u1}(0, x0) - V_{u2}(0, x0)|`` on the same spatial grid."""
    if not (u1 > 0 and u2 > 0):
        raise ValueError("horizons must be positive")
    a = solve_g_lattice(pair, spec.replace(u=u1, n_t=None)).value_at(x0)
    b = solve_g_lattice(pair, spec.replace(u=u2, n_t=None)).value_at(x0)
    return abs(a - b)


@dataclass(frozen=True)
class FeedbackTable:
    """Maximizing volatility ``alpha(t, x)``; ``alpha0`` is the time-zero slice interpolated at ``x0``."""

    times: np.ndarray
    xs: np.ndarray
    alpha: np.ndarray
    v_lo: float
    v_hi: float

    def alpha0(self, x0: float) -> float:
        i = int(np.argmin(np.abs(self.xs - x0)))
        return float(self.alpha[0, i])


def extract_feedback_vol(surface: ValueSurface) -> FeedbackTable:
    """Argmax volatility table, clamped to ``[v_lo, v_hi]``; needs ``v_lo > 0`` so ``1/alpha`` stays bounded."""
    s = surface.spec
    if not s.v_lo > 0:
        raise ValueError("v_lo = 0 leaves 1/alpha unbounded")
    alpha = np.clip(surface.feedback_vol, s.v_lo, s.v_hi)
    return FeedbackTable(surface.times, surface.xs, alpha, s.v_lo, s.v_hi)
