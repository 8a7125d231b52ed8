import numpy as np
import pytest

from gamehedge.hedge import AssumptionFailure
from gamehedge.models import Heston, HullWhite, RoughFOU, Scott, simulate
from gamehedge.payoff import Call, GamePayoffPair, Power, Put
from gamehedge.stopvalue import LatticeSpec
from gamehedge.verify import counterexample_pair, counterexample_run, lower_bound_check, mc_superreplication

SEED = 11
CALL = GamePayoffPair(Call(100.0), Call(100.0, 1.0, 10.0))
PUT = GamePayoffPair(Put(100.0), Put(100.0, 1.0, 10.0))


class TestSuperReplication:
    @pytest.mark.parametrize("spec", [Heston(), RoughFOU(H=0.1, lam=1.0, kappa=1.0, nu0=0.3)], ids=["heston", "rough"])
    def test_call(self, spec):
        rep = mc_superreplication(spec, CALL, 80.0, 2000, 256, SEED)
        assert rep.violation_fraction == 0.0 and rep.n_paths == 2000

    def test_put_positive_rate(self):
        rep = mc_superreplication(Heston(r=0.03), PUT, 80.0, 2000, 256, SEED)
        assert rep.violation_fraction == 0.0

    @pytest.mark.parametrize("spec", [HullWhite(), Scott()], ids=["hullwhite", "scott"])
    def test_power(self, spec):
        pair = GamePayoffPair(Power(2.0), Power(2.0, 1.0, 4.0))
        rep = mc_superreplication(spec.with_s0(1.0), pair, 1.0, 1000, 128, SEED)
        assert rep.violation_fraction == 0.0

    def test_assumption_failure_propagates(self):
        with pytest.raises(AssumptionFailure):
            mc_superreplication(Heston(s0=120.0, r=0.05), counterexample_pair(), 120.0, 10, 8, SEED)

    def test_reuses_batch(self):
        b = simulate(Heston(), 64, 300, SEED)
        a = mc_superreplication(Heston(), CALL, 80.0, 300, 64, SEED)
        c = mc_superreplication(Heston(), CALL, 80.0, 300, 64, SEED, batch=b)
        assert a.to_dict() == c.to_dict()

    def test_thread_determinism(self):
        a = mc_superreplication(Heston(), CALL, 80.0, 500, 64, SEED, threads=1)
        b = mc_superreplication(Heston(), CALL, 80.0, 500, 64, SEED, threads=4)
        assert a.to_dict() == b.to_dict()
        assert a.per_path_slack_min.tobytes() == b.per_path_slack_min.tobytes()


class TestCounterexample:
    def test_positive_rate_fails(self):
        assert counterexample_run(SEED, n_paths=2000, n_steps=256).violation_fraction >= 0.99

    def test_zero_rate_holds(self):
        assert counterexample_run(SEED, n_paths=2000, n_steps=256, r=0.0).violation_fraction == 0.0

    def test_penalty_equal_to_strike_holds(self):
        assert counterexample_run(SEED, n_paths=2000, n_steps=256, delta=100.0).violation_fraction == 0.0


class TestLowerBound:
    def test_call(self):
        tab = lower_bound_check(CALL, 80.0)
        assert tab.passed
        gaps = [r.gap for r in tab.rows]
        assert gaps == sorted(gaps) and abs(gaps[-1]) <= 0.01 * 9.0

    def test_identical_payoffs(self):
        pair = GamePayoffPair(Call(100.0), Call(100.0))
        tab = lower_bound_check(pair, 80.0, grid=LatticeSpec(1.0, 3000.0, n_y=300))
        assert all(r.gap == 0.0 for r in tab.rows) and tab.passed

    def test_put_large_penalty(self):
        pair = GamePayoffPair(Put(100.0), Put(100.0, 1.0, 150.0))
        tab = lower_bound_check(pair, 80.0)
        assert abs(tab.rows[-1].value - 100.0) <= 1.0 and tab.passed

    def test_to_dict(self):
        d = lower_bound_check(CALL, 80.0, v_hi_list=(1.0, 2.0), grid=LatticeSpec(1.0, 3000.0, n_y=200)).to_dict()
        assert [r["v_hi"] for r in d["rows"]] == [1.0, 2.0]
