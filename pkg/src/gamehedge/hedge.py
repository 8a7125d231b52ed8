"""The cheapest trivial super-replicating strategy and its pathwise audit.

The seller puts ``g(S0)`` into a buy-and-hold position: ``gamma`` shares and
``cash0`` in the bank, and cancels the first time the price leaves the exit
interval ``K_{S0}``.  Inside the interval ``g`` is concave, so the position
dominates ``f1``; on the boundary ``g = f2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .envelope import ClosedFormEnvelope, ConvexEnvelopeParams
from .payoff import GamePayoffPair

__all__ = [
    "AssumptionFailure",
    "AssumptionReport",
    "TrivialHedge",
    "PathCheck",
    "SuperRepReport",
    "check_assumption",
    "build_hedge",
    "portfolio_value",
    "verify_path",
    "verify_paths",
    "float_tolerance",
]


class AssumptionFailure(ValueError):
    """The hedge would not super-replicate: positive rate and negative cash leg."""


def _as_envelope(env, pair: GamePayoffPair):
    if isinstance(env, ConvexEnvelopeParams):
        return ClosedFormEnvelope(pair, env)
    return env


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the rate/contact/cash condition plus three sufficient conditions.

    ``reason`` is one of ``"rate_zero"``, ``"contact"``, ``"nonnegative_cash"`` or
    ``"negative_cash"`` (the only failing reason).
    """

    ok: bool
    reason: str
    constant_penalty: bool
    nonpositive_f2_slope: bool
    infinite_f1_slope: bool
    cash_leg: float

    def __bool__(self):
        return self.ok


def _constant_penalty(pair: GamePayoffPair, s0: float) -> bool:
    probe = np.geomspace(1e-3 * s0, 1e3 * s0, 257)
    probe = np.concatenate((probe, np.asarray(pair.kinks, dtype=float)))
    gap = pair.f2(probe) - pair.f1(probe)
    return bool(gap[0] > 0 and np.ptp(gap) <= 1e-12 * (1.0 + abs(gap[0])))


def _sup_slope(f) -> float:
    if f.is_piecewise_linear:
        return float(np.max(f.pieces()[1]))
    return f.asymptotic_slope()


def check_assumption(env, pair: GamePayoffPair, s0: float, rate_is_zero: bool) -> AssumptionReport:
    """Zero rate, or contact at ``s0``, or a non-negative bank leg ``g - s0 g'(s0+)``."""
    env = _as_envelope(env, pair)
    g0 = float(env.value(s0))
    slope = float(env.right_derivative(s0))
    cash = g0 - s0 * slope
    slack = 1e-12 * (1.0 + abs(g0))
    if hasattr(env, "xs"):
        # a grid line through the pinned left end carries cash -slope * x_min
        slack += abs(slope) * float(env.xs[0]) + 10.0 * env.tol * (1.0 + abs(g0))
    flags = dict(
        constant_penalty=_constant_penalty(pair, s0),
        nonpositive_f2_slope=_sup_slope(pair.f2) <= 0.0,
        infinite_f1_slope=pair.f1.asymptotic_slope() == math.inf,
    )
    if rate_is_zero:
        return AssumptionReport(True, "rate_zero", cash_leg=cash, **flags)
    if env.in_contact(s0):
        return AssumptionReport(True, "contact", cash_leg=cash, **flags)
    if cash >= -slack:
        return AssumptionReport(True, "nonnegative_cash", cash_leg=cash, **flags)
    return AssumptionReport(False, "negative_cash", cash_leg=cash, **flags)


@dataclass(frozen=True)
class TrivialHedge:
    """Buy-and-hold hedge with cancellation at the first exit from ``exit_interval``.

    ``exit_interval`` is ``None`` when ``g(s0) = f2(s0)``: the writer cancels at
    time zero.
    """

    initial_capital: float
    gamma: float
    cash0: float
    exit_interval: tuple[float, float] | None
    s0: float
    assumption_ok: bool
    override_used: bool = False
    envelope_tol: float = 0.0
    assumption: AssumptionReport | None = field(default=None, compare=False, repr=False)

    @property
    def cancels_immediately(self) -> bool:
        return self.exit_interval is None

    def to_dict(self) -> dict:
        lo, hi = self.exit_interval if self.exit_interval is not None else (None, None)
        return {
            "capital": self.initial_capital,
            "gamma": self.gamma,
            "cash0": self.cash0,
            "exit_lo": lo,
            "exit_hi": hi,
            "exit_empty": self.exit_interval is None,
            "assumption_ok": self.assumption_ok,
            "override_used": self.override_used,
        }


def build_hedge(
    env,
    pair: GamePayoffPair,
    s0: float,
    allow_override: bool = False,
    rate_is_zero: bool = False,
) -> TrivialHedge:
    """Cheapest trivial hedge at ``s0``.

    ``rate_is_zero`` declares that the bank account is flat; otherwise the
    cash leg must be non-negative off the contact set.  ``allow_override``
    returns a failing hedge anyway, flagged ``override_used``.
    """
    if not s0 > 0:
        raise ValueError("initial price must be positive")
    env = _as_envelope(env, pair)
    report = check_assumption(env, pair, s0, rate_is_zero)
    if not report.ok and not allow_override:
        raise AssumptionFailure(
            f"positive rate with negative cash leg {report.cash_leg:.6g} at s0={s0}; "
            "the trivial hedge does not super-replicate"
        )
    capital = float(env.value(s0))
    if env.in_contact(s0):
        gamma, interval = 0.0, None
    else:
        gamma = float(env.right_derivative(s0))
        interval = env.stop_interval(s0)
    cash0 = capital - s0 * gamma
    return TrivialHedge(
        initial_capital=capital,
        gamma=gamma,
        cash0=cash0,
        exit_interval=interval,
        s0=float(s0),
        assumption_ok=report.ok,
        override_used=not report.ok,
        envelope_tol=float(getattr(env, "tol", 0.0)),
        assumption=report,
    )


def portfolio_value(hedge: TrivialHedge, t, s_t, b_ratio):
    """Buy-and-hold value ``b_ratio * cash0 + gamma * s_t`` (``t`` is unused, kept for the call shape)."""
    b = np.asarray(b_ratio, dtype=float)
    if np.any(b < 1.0 - 1e-15):
        raise ValueError("bank-account ratio must be at least 1")
    out = b * hedge.cash0 + hedge.gamma * np.asarray(s_t, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def float_tolerance(hedge: TrivialHedge) -> float:
    """``1e-9 (1 + capital)``, widened by the contact tolerance when ``g`` came from a grid."""
    return (1e-9 + 10.0 * hedge.envelope_tol) * (1.0 + abs(hedge.initial_capital))


@dataclass(frozen=True)
class PathCheck:
    slack_min: float
    sigma_index: int
    violated: bool
    tolerance: float
    allowance: float


@dataclass(frozen=True)
class SuperRepReport:
    """Aggregate of pathwise super-replication checks.

    ``slack_tolerance`` is the largest per-path tolerance used; each path is
    judged against its own (float noise plus its own crossing allowance).
    """

    n_paths: int
    violation_fraction: float
    min_slack: float
    slack_tolerance: float
    per_path_sigma_hat: np.ndarray
    per_path_slack_min: np.ndarray = field(repr=False)
    per_path_violated: np.ndarray = field(repr=False)
    per_path_tolerance: np.ndarray = field(repr=False)

    @property
    def n_violations(self) -> int:
        return int(self.per_path_violated.sum())

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "violation_fraction": self.violation_fraction,
            "n_violations": self.n_violations,
            "min_slack": self.min_slack,
            "slack_tolerance": self.slack_tolerance,
        }

    @staticmethod
    def combine(parts: list["SuperRepReport"]) -> "SuperRepReport":
        """Concatenate reports over disjoint path sets (order-preserving)."""
        sig = np.concatenate([p.per_path_sigma_hat for p in parts])
        sl = np.concatenate([p.per_path_slack_min for p in parts])
        vi = np.concatenate([p.per_path_violated for p in parts])
        tol = np.concatenate([p.per_path_tolerance for p in parts])
        return _report(sig, sl, vi, tol)


def _report(sigma, slack, violated, tol) -> SuperRepReport:
    n = int(sigma.size)
    return SuperRepReport(
        n_paths=n,
        violation_fraction=float(violated.mean()) if n else 0.0,
        min_slack=float(slack.min()) if n else 0.0,
        slack_tolerance=float(tol.max()) if n else 0.0,
        per_path_sigma_hat=sigma,
        per_path_slack_min=slack,
        per_path_violated=violated,
        per_path_tolerance=tol,
    )


def _growth_weight(pair: GamePayoffPair, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w = np.zeros_like(a)
    for f in (pair.f1, pair.f2):
        w = np.maximum(w, 1.0 + f(a) / a + f(b) / b)
    return w


def verify_paths(hedge: TrivialHedge, pair: GamePayoffPair, times, s_paths, b_paths) -> SuperRepReport:
    """Audit the super-replication inequality on every row of ``s_paths``.

    Slack at grid time ``t_j`` is ``Z_{j ^ sigma} - f2(S_sigma) 1{sigma < j} - f1(S_j) 1{j <= sigma}``.
    The cancellation index is the first grid point outside the open exit
    interval, so the price at cancellation can overshoot the boundary ``b`` by
    ``d``.  That is absorbed by ``d * (|gamma| + L * w)``, where ``w`` is the growth
    weight ``max_i (1 + f_i(b)/b + f_i(S_sigma)/S_sigma)``; slack before
    cancellation gets float tolerance only.
    """
    t = np.asarray(times, dtype=float)
    S = np.atleast_2d(np.asarray(s_paths, dtype=float))
    B = np.asarray(b_paths, dtype=float)
    if B.ndim == 1:
        B = np.broadcast_to(B, S.shape)
    if S.shape[1] != t.size or B.shape != S.shape:
        raise ValueError(f"misaligned arrays: times {t.shape}, S {S.shape}, B {B.shape}")
    if not np.allclose(S[:, 0], hedge.s0, rtol=1e-12, atol=0.0):
        raise ValueError("paths must start at the hedge's initial price")
    n, M1 = S.shape
    rows = np.arange(n)

    if hedge.exit_interval is None:
        sigma = np.zeros(n, dtype=np.int64)
        hit = np.zeros(n, dtype=bool)
        lo, hi = -math.inf, math.inf
    else:
        lo, hi = hedge.exit_interval
        outside = (S <= lo) | (S >= hi)
        hit = outside.any(axis=1)
        sigma = np.where(hit, outside.argmax(axis=1), M1 - 1).astype(np.int64)

    Z = B * hedge.cash0 + hedge.gamma * S
    f1 = pair.f1(S.ravel()).reshape(S.shape)
    before = np.arange(M1)[None, :] <= sigma[:, None]
    slack_before = np.where(before, Z - f1, np.inf)
    slack = slack_before.min(axis=1)

    s_sig = S[rows, sigma]
    z_sig = Z[rows, sigma]
    after = sigma < M1 - 1
    slack_after = np.where(after, z_sig - pair.f2(s_sig), np.inf)
    slack = np.minimum(slack, slack_after)

    # overshoot past the crossed boundary, only for genuine exits
    exited = hit
    over_lo = np.where(np.isfinite(lo), lo - s_sig, 0.0)
    over_hi = np.where(np.isfinite(hi), s_sig - hi, 0.0)
    d = np.where(exited, np.maximum(np.maximum(over_lo, over_hi), 0.0), 0.0)
    bnd = np.where(over_lo >= over_hi, lo if np.isfinite(lo) else 1.0, hi if np.isfinite(hi) else 1.0)
    bnd = np.where(d > 0, bnd, s_sig)
    allowance = d * (abs(hedge.gamma) + pair.L * _growth_weight(pair, bnd, s_sig))
    tol_float = float_tolerance(hedge)

    # exact-at-sigma slack gets the allowance; pre-cancellation slack does not
    pre = np.where(np.arange(M1)[None, :] < sigma[:, None], Z - f1, np.inf).min(axis=1)
    at = np.minimum(Z[rows, sigma] - f1[rows, sigma], slack_after)
    violated = (pre < -tol_float) | (at < -(tol_float + allowance))
    return _report(sigma, slack, violated, tol_float + allowance)


def verify_path(hedge: TrivialHedge, pair: GamePayoffPair, times, s_path, b_path) -> PathCheck:
    """Single-path form of :func:`verify_paths`."""
    s = np.asarray(s_path, dtype=float)
    b = np.asarray(b_path, dtype=float)
    if s.ndim != 1 or s.shape != b.shape or s.size != np.asarray(times).size:
        raise ValueError("times, s_path and b_path must be aligned 1-d arrays")
    rep = verify_paths(hedge, pair, times, s[None, :], b[None, :])
    return PathCheck(
        slack_min=float(rep.per_path_slack_min[0]),
        sigma_index=int(rep.per_path_sigma_hat[0]),
        violated=bool(rep.per_path_violated[0]),
        tolerance=float(rep.per_path_tolerance[0]),
        allowance=float(rep.per_path_tolerance[0] - float_tolerance(hedge)),
    )
