"""The buy-and-hold hedge held until the price leaves the no-contact interval.

It super-replicates on every simulated path of four stochastic volatility
models. With a positive rate and a short cash leg it fails.
"""

from gamehedge import Call, GamePayoffPair, build_hedge
from gamehedge.envelope import envelope_for
from gamehedge.models import Heston, HullWhite, RoughFOU, Scott, simulate
from gamehedge.verify import counterexample_run, mc_superreplication

pair = GamePayoffPair(Call(100.0), Call(100.0, 1.0, 10.0))
s0 = 80.0
hedge = build_hedge(envelope_for(pair, s0), pair, s0, rate_is_zero=True)
print("hedge:", hedge.to_dict())

n_paths, n_steps, seed = 4000, 256, 11
for model in (Heston, HullWhite, Scott, RoughFOU):
    for r in (0.0, 0.03):
        spec = model(s0=s0, r=r)
        batch = simulate(spec, n_steps, n_paths, seed, threads=None)
        rep = mc_superreplication(spec, pair, s0, n_paths, n_steps, seed, batch=batch)
        print(
            f"{model.name:9s} r={r:.2f}: violations {rep.n_violations}/{rep.n_paths}, "
            f"min slack {rep.min_slack:9.4f}, tolerance {rep.slack_tolerance:.2e}"
        )

# Doubled call at S0 = 120: one share and -100 in cash.
for r in (0.05, 0.0):
    rep = counterexample_run(seed, n_paths=2000, n_steps=256, r=r)
    print(f"counterexample r={r:.2f}: violation fraction {rep.violation_fraction:.4f}")
