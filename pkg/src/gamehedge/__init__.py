"""Super-replication of game options by the game concave envelope.

Modules
-------
payoff      exercise and cancellation payoffs, growth checks
envelope    the envelope ``g`` in closed form and on a grid
hedge       the buy-and-hold hedge and its pathwise audit
models      stochastic-volatility simulators and volatility steering
stopvalue   optimal stopping under uncertain volatility
verify      Monte Carlo and lattice checks of the hedge
semistatic  robust pricing with static options on finite trees
lawdensity  Brownian coupling of discrete martingale laws
cli         command line front end
"""

from .envelope import ClosedFormEnvelope, EnvelopeResult, envelope_for, g_grid
from .hedge import TrivialHedge, build_hedge, verify_paths
from .payoff import Call, GamePayoffPair, Power, Put, Tabulated

__version__ = "0.1.0"

__all__ = [
    "Call",
    "Put",
    "Power",
    "Tabulated",
    "GamePayoffPair",
    "ClosedFormEnvelope",
    "EnvelopeResult",
    "envelope_for",
    "g_grid",
    "TrivialHedge",
    "build_hedge",
    "verify_paths",
]
