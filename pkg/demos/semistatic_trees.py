"""Robust prices on finite trees with and without static options."""

import numpy as np

from gamehedge.semistatic import (
    StaticInstrument,
    TreeMarket,
    TreeNode,
    dual_price,
    feasibility_ball,
    primal_superhedge,
    random_feasible_instance,
)


def call(K):
    return lambda path: max(path[-1] - K, 0.0)


binomial = TreeMarket(TreeNode(100.0, (TreeNode(80.0), TreeNode(120.0))))
trinomial = TreeMarket(TreeNode(100.0, (TreeNode(80.0), TreeNode(100.0), TreeNode(130.0))))

for name, tree in (("binomial", binomial), ("trinomial", trinomial)):
    d = dual_price(tree, call(100.0))
    p = primal_superhedge(tree, call(100.0))
    print(f"{name:9s}: dual {d.dual_value:.6f}  primal {p.primal_value:.6f}  q={np.round(d.q, 4)}")

# Fixing the call's price at 10 pins the binomial tree but leaves room in the trinomial one.
static = [StaticInstrument(call(100.0), 10.0)]
print("robust to price noise? binomial:", feasibility_ball(binomial, static, 0.5))
print("robust to price noise? trinomial:", feasibility_ball(trinomial, static, 1.0))
print("trinomial price of a 110 call given the 100 call at 10:", dual_price(trinomial, call(110.0), static).dual_value)

rng = np.random.default_rng(3)
gaps = []
for _ in range(50):
    tree, H, statics, _ = random_feasible_instance(rng)
    gaps.append(abs(dual_price(tree, H, statics).dual_value - primal_superhedge(tree, H, statics).primal_value))
print(f"largest primal/dual gap over 50 random trees: {max(gaps):.2e}")
