"""End-to-end checks of the envelope hedge.

* upper bound: the trivial hedge super-replicates on simulated paths of every model;
* the negative example: with a positive rate and a negative cash leg it does not;
* lower bound: the uncertain-volatility lattice value approaches ``g(S0)`` from below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envelope import envelope_for
from .hedge import SuperRepReport, build_hedge, verify_paths
from .models import Heston, PathBatch, simulate
from .payoff import Call, GamePayoffPair
from .stopvalue import LatticeSpec, default_lattice, solve_g_lattice

__all__ = [
    "mc_superreplication",
    "counterexample_run",
    "counterexample_pair",
    "lower_bound_check",
    "LowerBoundRow",
    "LowerBoundTable",
]


def _rate_is_zero(spec, n_steps: int) -> bool:
    return bool(np.all(spec.rates(n_steps) == 0.0))


def mc_superreplication(
    spec,
    pair: GamePayoffPair,
    s0: float,
    n_paths: int,
    n_steps: int,
    seed: int,
    threads: int | None = 1,
    allow_override: bool = False,
    batch: PathBatch | None = None,
) -> SuperRepReport:
    """Build ``g`` and the trivial hedge at ``s0`` and audit it on simulated paths.

    ``batch`` reuses already simulated paths (rescaled to ``s0``); otherwise the
    model is simulated from ``s0``.
    """
    if abs(spec.s0 - s0) > 1e-12 * s0:
        spec = spec.with_s0(s0)
    env = envelope_for(pair, s0)
    hedge = build_hedge(env, pair, s0, allow_override=allow_override, rate_is_zero=_rate_is_zero(spec, n_steps))
    if batch is None:
        batch = simulate(spec, n_steps, n_paths, seed, threads)
    elif batch.S[0, 0] != s0:
        batch = batch.scaled(s0)
    return verify_paths(hedge, pair, batch.times, batch.S, batch.B)


def counterexample_pair(delta: float = 0.0) -> GamePayoffPair:
    """Call with cancellation payoff ``2 (x - 100)^+ + delta``."""
    return GamePayoffPair(Call(100.0), Call(100.0, 2.0, delta))


def counterexample_run(
    seed: int,
    n_paths: int = 10_000,
    n_steps: int = 512,
    r: float = 0.05,
    delta: float = 0.0,
    threads: int | None = 1,
) -> SuperRepReport:
    """The hedge of a doubled call at ``S0 = 120`` under a positive rate.

    Holding one share and ``-100`` cash, the value is ``S - 100 B`` which falls
    below the exercise value ``S - 100`` as soon as ``B > 1``.  The hedge is
    built with the override so the failure can be observed.
    """
    pair = counterexample_pair(delta)
    spec = Heston(s0=120.0, r=r)
    return mc_superreplication(spec, pair, 120.0, n_paths, n_steps, seed, threads, allow_override=True)


@dataclass(frozen=True)
class LowerBoundRow:
    v_hi: float
    value: float
    g: float
    gap: float


@dataclass(frozen=True)
class LowerBoundTable:
    rows: tuple[LowerBoundRow, ...]
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "rows": [r.__dict__ for r in self.rows],
            "tol": self.tol,
            "passed": self.passed,
        }


def lower_bound_check(
    pair: GamePayoffPair,
    s0: float,
    v_hi_list=(2.0, 4.0, 6.0),
    grid: LatticeSpec | None = None,
    rel_tol: float = 0.01,
) -> LowerBoundTable:
    """Lattice value minus ``g(s0)`` for each volatility cap.

    Passes when the largest cap is within ``rel_tol * (1 + g)`` below ``g`` and
    the gaps do not decrease (beyond ``1e-6 (1 + g)``) as the cap grows.
    """
    caps = sorted(float(v) for v in v_hi_list)
    g0 = float(envelope_for(pair, s0).value(s0))
    base = grid if grid is not None else default_lattice(s0, pair.kinks)
    rows = []
    for v in caps:
        surf = solve_g_lattice(pair, base.replace(v_hi=v, n_t=None))
        val = surf.value_at(s0)
        rows.append(LowerBoundRow(v, val, g0, val - g0))
    slack = 1e-6 * (1.0 + abs(g0))
    gaps = np.array([r.gap for r in rows])
    monotone = bool(np.all(np.diff(gaps) >= -slack))
    final_ok = rows[-1].gap >= -rel_tol * (1.0 + abs(g0))
    return LowerBoundTable(tuple(rows), rel_tol * (1.0 + abs(g0)), monotone and final_ok)
