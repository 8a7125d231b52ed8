"""Game-option payoff functions and the regularity checks they must pass.

A game option pays the holder ``f1(S_t)`` when she exercises and
``f2(S_t) >= f1(S_t)`` when the writer cancels.  Every payoff here is a
continuous, non-negative function on ``(0, inf)``; the piecewise-linear ones
(call, put, tabulated) also expose their knots and slopes so the envelope code
can work with them exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

GROWTH_ETA = 0.01

__all__ = [
    "Call",
    "Put",
    "Power",
    "Tabulated",
    "PayoffFn",
    "GamePayoffPair",
    "ValidationReport",
    "evaluate",
    "validate_pair",
    "growth_exponent",
    "default_probe",
    "payoff_from_dict",
    "pair_from_dict",
]


def _positive(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("payoffs are defined for strictly positive prices only")
    return arr


class PayoffFn:
    """Base class; subclasses are frozen dataclasses."""

    kind = "abstract"

    def __call__(self, x):
        arr = _positive(x)
        out = self._eval(arr)
        return float(out) if np.ndim(out) == 0 else out

    def _eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def at_zero(self) -> float:
        """Right limit ``f(0+)``."""
        raise NotImplementedError

    def slope_right(self, x):
        """Right derivative ``f'(x+)``, ``x >= 0``."""
        raise NotImplementedError

    def asymptotic_slope(self) -> float:
        raise NotImplementedError

    @property
    def kinks(self) -> tuple[float, ...]:
        return ()

    @property
    def is_piecewise_linear(self) -> bool:
        return False

    def is_convex(self) -> bool:
        return True

    def to_dict(self) -> dict:
        raise NotImplementedError


class _PiecewiseLinear(PayoffFn):
    """Shared machinery for payoffs that are linear between knots."""

    def pieces(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Return ``(starts, slopes, f0)``: segment ``j`` is ``[starts[j], starts[j+1])``.

        ``starts[0] == 0`` and the last segment extends to infinity.
        """
        raise NotImplementedError

    @property
    def is_piecewise_linear(self) -> bool:
        return True

    def _eval(self, x):
        starts, slopes, f0 = self.pieces()
        values = f0 + np.concatenate(([0.0], np.cumsum(slopes[:-1] * np.diff(starts))))
        j = np.searchsorted(starts, x, side="right") - 1
        return values[j] + slopes[j] * (x - starts[j])

    def value_at_knots(self) -> np.ndarray:
        starts, slopes, f0 = self.pieces()
        return f0 + np.concatenate(([0.0], np.cumsum(slopes[:-1] * np.diff(starts))))

    def at_zero(self) -> float:
        return float(self.pieces()[2])

    def slope_right(self, x):
        starts, slopes, _ = self.pieces()
        j = np.searchsorted(starts, np.asarray(x, dtype=float), side="right") - 1
        out = slopes[np.maximum(j, 0)]
        return float(out) if np.ndim(out) == 0 else out

    def asymptotic_slope(self) -> float:
        return float(self.pieces()[1][-1])

    def is_convex(self, tol: float = 1e-12) -> bool:
        slopes = self.pieces()[1]
        return bool(np.all(np.diff(slopes) >= -tol * (1.0 + np.abs(slopes[:-1]))))


@dataclass(frozen=True)
class Call(_PiecewiseLinear):
    """``c * (x - K)^+ + delta``."""

    K: float
    c: float = 1.0
    delta: float = 0.0
    kind = "call"

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError(f"strike must be positive, got {self.K}")
        if not self.c > 0:
            raise ValueError(f"scale must be positive, got {self.c}")
        if self.delta < 0:
            raise ValueError(f"penalty must be non-negative, got {self.delta}")

    def pieces(self):
        return np.array([0.0, self.K]), np.array([0.0, self.c]), float(self.delta)

    def _eval(self, x):
        return self.c * np.maximum(x - self.K, 0.0) + self.delta

    @property
    def kinks(self):
        return (float(self.K),)

    def to_dict(self):
        return {"type": "call", "K": self.K, "c": self.c, "delta": self.delta}


@dataclass(frozen=True)
class Put(_PiecewiseLinear):
    """``c * (K - x)^+ + delta``."""

    K: float
    c: float = 1.0
    delta: float = 0.0
    kind = "put"

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError(f"strike must be positive, got {self.K}")
        if not self.c > 0:
            raise ValueError(f"scale must be positive, got {self.c}")
        if self.delta < 0:
            raise ValueError(f"penalty must be non-negative, got {self.delta}")

    def pieces(self):
        return np.array([0.0, self.K]), np.array([-self.c, 0.0]), float(self.c * self.K + self.delta)

    def _eval(self, x):
        return self.c * np.maximum(self.K - x, 0.0) + self.delta

    @property
    def kinks(self):
        return (float(self.K),)

    def to_dict(self):
        return {"type": "put", "K": self.K, "c": self.c, "delta": self.delta}


@dataclass(frozen=True)
class Power(PayoffFn):
    """``c * x**p + delta`` with ``p > 1``."""

    p: float
    c: float = 1.0
    delta: float = 0.0
    kind = "power"

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"power exponent must exceed 1, got {self.p}")
        if not self.c > 0:
            raise ValueError(f"scale must be positive, got {self.c}")
        if self.delta < 0:
            raise ValueError(f"penalty must be non-negative, got {self.delta}")

    def _eval(self, x):
        return self.c * x**self.p + self.delta

    def at_zero(self):
        return float(self.delta)

    def slope_right(self, x):
        out = self.c * self.p * np.asarray(x, dtype=float) ** (self.p - 1.0)
        return float(out) if np.ndim(out) == 0 else out

    def asymptotic_slope(self):
        return float("inf")

    def to_dict(self):
        return {"type": "power", "p": self.p, "c": self.c, "delta": self.delta}


@dataclass(frozen=True)
class Tabulated(_PiecewiseLinear):
    """Linear interpolation through ``(xs, ys)``, extrapolated with the boundary slopes."""

    xs: tuple[float, ...]
    ys: tuple[float, ...]
    kind = "tabulated"
    _starts: np.ndarray = field(init=False, repr=False, compare=False)
    _slopes: np.ndarray = field(init=False, repr=False, compare=False)
    _f0: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        object.__setattr__(self, "xs", tuple(xs.tolist()))
        object.__setattr__(self, "ys", tuple(ys.tolist()))
        if xs.ndim != 1 or xs.size < 2 or xs.size != ys.size:
            raise ValueError("tabulated payoff needs at least two (x, y) pairs of equal length")
        if np.any(xs <= 0) or np.any(np.diff(xs) <= 0):
            raise ValueError("abscissae must be positive and strictly increasing")
        if np.any(ys < 0):
            raise ValueError("tabulated values must be non-negative")
        seg = np.diff(ys) / np.diff(xs)
        f0 = ys[0] - seg[0] * xs[0]
        if f0 < -1e-12 * (1 + abs(ys[0])):
            raise ValueError("left extrapolation goes negative before reaching 0")
        if seg[-1] < 0:
            raise ValueError("right extrapolation has negative slope; payoff would turn negative")
        starts = np.concatenate(([0.0], xs[1:-1])) if xs.size > 2 else np.array([0.0])
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_slopes", seg.copy())
        object.__setattr__(self, "_f0", float(max(f0, 0.0)))

    def pieces(self):
        return self._starts, self._slopes, self._f0

    @property
    def kinks(self):
        return tuple(self.xs)

    def to_dict(self):
        return {"type": "tabulated", "xs": list(self.xs), "ys": list(self.ys)}


def evaluate(payoff: PayoffFn, x):
    """Evaluate ``payoff`` at ``x > 0``; raises ``ValueError`` outside the domain."""
    return payoff(x)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    reason: str = ""
    x: float | None = None
    y: float | None = None

    def __bool__(self):
        return self.ok


def _breaks_order_scale(f1: PayoffFn, f2: PayoffFn) -> bool:
    # same-family f2 with c < 1 that dips below f1 on the tail
    if type(f1) is not type(f2) or isinstance(f2, Tabulated) or f2.c >= 1:
        return False
    probe = np.geomspace(1e-3, 1e6, 256)
    return bool(np.any(f1(probe) > f2(probe)))


@dataclass(frozen=True)
class GamePayoffPair:
    """Buyer payoff ``f1``, cancellation payoff ``f2`` and growth constant ``L``."""

    f1: PayoffFn
    f2: PayoffFn
    L: float = 4.0

    def __post_init__(self):
        if not self.L > 1:
            raise ValueError(f"growth constant L must exceed 1, got {self.L}")
        if _breaks_order_scale(self.f1, self.f2):
            raise ValueError("cancellation payoff scale c < 1 breaks f1 <= f2")

    @property
    def kinks(self) -> tuple[float, ...]:
        return tuple(sorted(set(self.f1.kinks) | set(self.f2.kinks)))

    def is_convex(self) -> bool:
        return self.f1.is_convex() and self.f2.is_convex()

    def to_dict(self) -> dict:
        return {"f1": self.f1.to_dict(), "f2": self.f2.to_dict(), "L": self.L}


def default_probe(pair: GamePayoffPair, s0: float, n: int = 512) -> np.ndarray:
    """Log-spaced points on ``[s0/1000, 1000*s0]`` plus every kink of the pair."""
    pts = np.geomspace(s0 * 1e-3, s0 * 1e3, n)
    return np.unique(np.concatenate((pts, np.asarray(pair.kinks, dtype=float))))


def validate_pair(pair: GamePayoffPair, probe) -> ValidationReport:
    """Check ``f1 <= f2`` and the growth/regularity bound on every probe point and pair.

    The bound is ``|f(x)-f(y)| <= L |x-y| (1 + f(x)/x + f(y)/y)`` for both payoffs.
    Failures are reported with the first offending point, never raised.
    """
    x = np.unique(np.asarray(probe, dtype=float))
    if x.size == 0 or np.any(x <= 0):
        raise ValueError("probe must be a non-empty set of positive prices")
    v1, v2 = pair.f1(x), pair.f2(x)
    bad = np.nonzero(v1 > v2 + 1e-12 * (1.0 + np.abs(v2)))[0]
    if bad.size:
        return ValidationReport(False, "f1 exceeds f2", float(x[bad[0]]))
    for name, v in (("f1", v1), ("f2", v2)):
        lhs = np.abs(v[:, None] - v[None, :])
        ratio = v / x
        rhs = pair.L * np.abs(x[:, None] - x[None, :]) * (1.0 + ratio[:, None] + ratio[None, :])
        viol = lhs > rhs + 1e-12 * (1.0 + lhs)
        if viol.any():
            i, j = np.argwhere(viol)[0]
            return ValidationReport(False, f"growth condition fails for {name}", float(x[i]), float(x[j]))
    return ValidationReport(True)


def _growth_single(f: PayoffFn) -> tuple[float, float]:
    if isinstance(f, Power):
        return max(f.c, f.delta), max(f.p, 1.0 + GROWTH_ETA)
    if isinstance(f, _PiecewiseLinear):
        # f(x) <= max knot value + (max positive slope) * x <= Lt * (1 + x^N)
        top = float(np.max(f.value_at_knots()))
        up = max(0.0, float(np.max(f.pieces()[1])))
        return top + up, 1.0 + GROWTH_ETA
    raise TypeError(f"unsupported payoff {type(f).__name__}")


def growth_exponent(pair: GamePayoffPair) -> tuple[float, float]:
    """Constants ``(Lt, N)`` with ``f_i(x) <= Lt (1 + x**N)`` on ``(0, inf)``, ``N > 1``."""
    (l1, n1), (l2, n2) = _growth_single(pair.f1), _growth_single(pair.f2)
    return max(l1, l2), max(n1, n2)


_PAYOFF_TYPES = {"call": Call, "put": Put, "power": Power, "tabulated": Tabulated}


def payoff_from_dict(d: Mapping[str, Any]) -> PayoffFn:
    kind = str(d.get("type", "")).lower()
    if kind not in _PAYOFF_TYPES:
        raise ValueError(f"unknown payoff type {d.get('type')!r}")
    if kind == "tabulated":
        return Tabulated(tuple(d["xs"]), tuple(d["ys"]))
    if kind == "power":
        return Power(float(d["p"]), float(d.get("c", 1.0)), float(d.get("delta", 0.0)))
    return _PAYOFF_TYPES[kind](float(d["K"]), float(d.get("c", 1.0)), float(d.get("delta", 0.0)))


def pair_from_dict(d: Mapping[str, Any]) -> GamePayoffPair:
    return GamePayoffPair(payoff_from_dict(d["f1"]), payoff_from_dict(d["f2"]), float(d.get("L", 4.0)))
