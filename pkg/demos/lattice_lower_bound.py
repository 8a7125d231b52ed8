"""Optimal stopping under volatility uncertainty approaches g(S0) from below."""

from gamehedge import Call, GamePayoffPair, Put
from gamehedge.stopvalue import default_lattice, extract_feedback_vol, horizon_invariance_gap, solve_g_lattice
from gamehedge.verify import lower_bound_check

cases = {
    "call K=100, delta=10": (GamePayoffPair(Call(100.0), Call(100.0, 1.0, 10.0)), 80.0),
    "call K=100, c=2":      (GamePayoffPair(Call(100.0), Call(100.0, 2.0, 0.0)), 120.0),
    "put K=100, delta=10":  (GamePayoffPair(Put(100.0), Put(100.0, 1.0, 10.0)), 80.0),
}
for name, (pair, x0) in cases.items():
    table = lower_bound_check(pair, x0, (2.0, 4.0, 6.0))
    gaps = "  ".join(f"v_hi={r.v_hi:g}: {r.value:8.4f}" for r in table.rows)
    print(f"{name:22s} g={table.rows[0].g:8.4f}  {gaps}  passed={table.passed}")

pair, x0 = cases["call K=100, delta=10"]
spec = default_lattice(x0, pair.kinks).replace(v_hi=6.0)
print("horizon gap u=0.5 vs u=1:", horizon_invariance_gap(pair, spec, 0.5, 1.0, x0))

# The maximizing volatility switches between the two caps.
surface = solve_g_lattice(pair, spec.replace(v_hi=2.0))
fb = extract_feedback_vol(surface)
print("feedback volatility at t=0 near x0:", fb.alpha0(x0))
