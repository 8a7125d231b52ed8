"""Brownian quantile coupling of discrete martingale laws and its continuous interpolation."""

import numpy as np

from gamehedge import lawdensity as ld

law = ld.law_from_dict(
    {
        "n": 2,
        "s0": 100,
        "steps": [
            {"conditionals": [{"given": 100, "support": [80, 120], "prob": [0.5, 0.5]}]},
            {
                "conditionals": [
                    {"given": 80, "support": [64, 96], "prob": [0.5, 0.5]},
                    {"given": 120, "support": [96, 144], "prob": [0.5, 0.5]},
                ]
            },
        ],
    }
)

batch = ld.quantile_coupling_sample(law, 100_000, seed=5)
match = ld.law_match_test(batch.M, law)
print(f"law match: TV={match.tv_distance:.4f}, chi2 p={match.p_value:.3f}, pass={match.passed}")

fine = ld.quantile_coupling_sample(law, 5, seed=5, fine_per_block=8)
paths = ld.interpolate_paths(law, fine)
print("one interpolated path:", np.round(paths[0], 3))
print("chain values:          ", fine.M[0])

c = law.conditional(0, [100.0])
w = np.linspace(-1.0, 1.0, 5)
print("psi at half block left:", np.round(ld.psi(c, law.block, w, 0.5 * law.block), 3))

target = ld.GBMTarget(100.0, 0.3, 1.0)
table = ld.weak_distance_diag(lambda n: ld.binomial_gbm_law(n, 100.0, 0.3, 1.0), (4, 8, 16), 20_000, 5, target)
for r in table.rows:
    print(f"binomial n={r.n:2d}: distance proxy {r.proxy:.4f} +- {r.stderr:.4f} ({r.worst})")
