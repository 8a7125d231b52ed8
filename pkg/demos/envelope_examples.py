"""Game concave envelopes for calls, puts and powers, in closed form and on a grid."""

import numpy as np

from gamehedge import Call, GamePayoffPair, Power, Put, Tabulated, g_grid
from gamehedge.envelope import ClosedFormEnvelope, convex_params, default_domain

# A call that the seller may cancel by paying the exercise value plus 10.
call = GamePayoffPair(Call(100.0), Call(100.0, 1.0, 10.0))
p = convex_params(call)
print(f"call: A={p.A}, beta={p.beta}, m={p.m}, rho={p.rho}")
env = ClosedFormEnvelope(call)
for s0 in (50.0, 80.0, 100.0, 120.0):
    print(f"  g({s0:g}) = {env.value(s0):.4f}   exit interval {env.stop_interval(s0)}")

# With a penalty at least the strike the put is worth K everywhere.
put = GamePayoffPair(Put(100.0), Put(100.0, 1.0, 150.0))
print("put with large penalty:", ClosedFormEnvelope(put).value(np.array([10.0, 100.0, 500.0])))

power = GamePayoffPair(Power(2.0), Power(2.0, 1.0, 4.0))
p = convex_params(power)
print(f"power p=2: A={p.A}, beta={p.beta}; g(1)={ClosedFormEnvelope(power).value(1.0)}")

# The grid solver reproduces the closed form.
s0, n = 80.0, 4096
grid = g_grid(call, default_domain(call, s0, n), n)
xs = np.linspace(s0 / 4, 4 * s0, 1000)
err = np.max(np.abs(grid.value(xs) - env.value(xs)) / (1 + np.abs(env.value(xs))))
print(f"grid vs closed form on [S0/4, 4 S0]: {err:.2e} ({grid.iterations} iterations)")

# A non-convex exercise payoff needs the grid.
hump = Tabulated((50.0, 100.0, 150.0, 200.0), (10.0, 20.0, 10.0, 10.0))
cap = Tabulated((50.0, 100.0, 150.0, 200.0), (12.0, 24.0, 14.0, 14.0))
pair = GamePayoffPair(hump, cap)
# step 0.5 puts every kink on a node, so interpolation never cuts below f1
g = g_grid(pair, (0.5, 1000.5), 2001)
for x in (75.0, 100.0, 125.0, 175.0):
    print(f"  hump: g({x:g}) = {g.value(x):.4f}  f1={hump(x):.2f}  f2={cap(x):.2f}  contact={g.in_contact(x)}")
