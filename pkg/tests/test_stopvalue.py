import math

import numpy as np
import pytest
from oracles import bs_call, call_example

from gamehedge.payoff import Call, GamePayoffPair, Put, Tabulated
from gamehedge.stopvalue import (
    LatticeSpec,
    default_lattice,
    extract_feedback_vol,
    horizon_invariance_gap,
    solve_g_lattice,
)

CALL = GamePayoffPair(Call(100.0), Call(100.0, 1.0, 10.0))
GRID = LatticeSpec(1.0, 3000.0, n_y=1200)


class TestLatticeSpec:
    def test_cfl_default(self):
        s = LatticeSpec(1.0, 3000.0, n_y=1200, v_hi=6.0)
        assert s.dt <= s.dy**2 / 36.0 * (1 + 1e-12)

    def test_cfl_violation(self):
        with pytest.raises(ValueError, match="CFL"):
            LatticeSpec(1.0, 3000.0, n_y=1200, v_hi=6.0, n_t=10)

    @pytest.mark.parametrize(
        "kw", [dict(x_min=0.0), dict(n_y=4), dict(u=0.0), dict(v_lo=2.0, v_hi=1.0), dict(v_lo=-1.0)]
    )
    def test_invalid(self, kw):
        base = dict(x_min=1.0, x_max=3000.0)
        with pytest.raises(ValueError):
            LatticeSpec(**{**base, **kw})

    def test_default_lattice(self):
        s = default_lattice(80.0)
        assert (s.x_min, s.x_max, s.n_y) == (0.01, 3000.0, 1600)

    def test_default_lattice_puts_kink_on_node(self):
        s = default_lattice(80.0, (100.0,))
        assert np.min(np.abs(np.exp(s.ys()) - 100.0)) <= 1e-9
        assert 3000.0 <= s.x_max <= 3000.0 * 1.02


class TestSolve:
    def test_call_reaches_g(self):
        v = solve_g_lattice(CALL, GRID).value_at(80.0)
        assert abs(v - 8.0) <= 0.01 * 8.0

    def test_black_scholes_when_obstacle_never_binds(self):
        # one volatility is always chosen for a convex payoff, and f2 is out of reach
        pair = GamePayoffPair(Call(100.0), Call(100.0, 1.0, 1e6))
        spec = LatticeSpec(1.0, 3000.0, n_y=1200, v_lo=0.01, v_hi=0.3)
        v = solve_g_lattice(pair, spec).value_at(80.0)
        assert v == pytest.approx(bs_call(80.0, 100.0, 0.3, 1.0), rel=5e-3)

    def test_identical_payoffs(self):
        pair = GamePayoffPair(Put(100.0), Put(100.0))
        surf = solve_g_lattice(pair, LatticeSpec(1.0, 3000.0, n_y=300, v_hi=2.0))
        np.testing.assert_array_equal(surf.V[0], surf.f1)
        fb = extract_feedback_vol(surf)
        assert set(np.unique(fb.alpha)) <= {surf.spec.v_lo, surf.spec.v_hi}

    def test_sandwich(self):
        surf = solve_g_lattice(CALL, LatticeSpec(1.0, 3000.0, n_y=400, v_hi=4.0))
        tol = 1e-9 * (1 + np.abs(surf.f2))
        assert np.all(surf.V >= surf.f1 - tol) and np.all(surf.V <= surf.f2 + tol)

    def test_monotone_in_vhi_and_antimonotone_in_vlo(self):
        spec = LatticeSpec(1.0, 3000.0, n_y=400)
        vals = [solve_g_lattice(CALL, spec.replace(v_hi=v)).value_at(80.0) for v in (1.0, 2.0, 4.0)]
        assert vals[0] <= vals[1] + 1e-9 and vals[1] <= vals[2] + 1e-9
        # a call-like convex value prefers the high volatility, so v_lo has no effect
        put = GamePayoffPair(Put(100.0), Put(100.0, 1.0, 10.0))
        lo_small = solve_g_lattice(put, spec.replace(v_hi=2.0, v_lo=0.01)).value_at(80.0)
        lo_big = solve_g_lattice(put, spec.replace(v_hi=2.0, v_lo=0.5)).value_at(80.0)
        assert lo_big <= lo_small + 1e-9

    def test_non_finite_payoff(self):
        class Bad(Call):
            def __call__(self, x):
                return np.full_like(np.asarray(x, dtype=float), np.inf)

        with pytest.raises(ValueError):
            solve_g_lattice(GamePayoffPair(Call(100.0), Bad(100.0)), LatticeSpec(1.0, 100.0, n_y=50, v_hi=1.0))

    def test_value_at_outside(self):
        surf = solve_g_lattice(CALL, LatticeSpec(10.0, 300.0, n_y=50, v_hi=1.0))
        with pytest.raises(ValueError):
            surf.value_at(5.0)

    def test_concave_off_contact(self):
        # off the contact set the time-zero slice is concave in price
        surf = solve_g_lattice(CALL, LatticeSpec(1.0, 3000.0, n_y=600))
        x, V = surf.xs, surf.V[0]
        free = (V < surf.f2 - 1e-6) & (x > 5.0) & (x < 95.0)
        slope = np.diff(V) / np.diff(x)
        assert np.all(np.diff(slope)[free[1:-1]] <= 1e-6)

    def test_grid_convergence(self):
        errs = []
        for n_y in (600, 1200, 2400):
            v = solve_g_lattice(CALL, LatticeSpec(1.0, 3000.0, n_y=n_y)).value_at(80.0)
            errs.append(abs(v - call_example(100.0, 1.0, 10.0, 80.0)[0]))
        assert errs[0] > errs[1] > errs[2]


class TestHorizon:
    def test_call_gap(self):
        gap = horizon_invariance_gap(CALL, GRID, 0.5, 1.0, 80.0)
        assert gap <= 0.01 * (1 + 8.0)

    def test_identical_payoffs_gap_zero(self):
        pair = GamePayoffPair(Call(100.0), Call(100.0))
        assert horizon_invariance_gap(pair, LatticeSpec(1.0, 3000.0, n_y=300, v_hi=2.0), 0.5, 1.0, 80.0) == 0.0

    def test_gap_shrinks_with_vhi(self):
        spec = LatticeSpec(1.0, 3000.0, n_y=400)
        gaps = [horizon_invariance_gap(CALL, spec.replace(v_hi=v), 0.5, 1.0, 80.0) for v in (2.0, 4.0, 8.0)]
        assert gaps[1] <= gaps[0] + 1e-6 and gaps[2] <= gaps[1] + 1e-6

    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            horizon_invariance_gap(CALL, GRID, 0.0, 1.0, 80.0)


class TestFeedback:
    def test_zero_vlo_rejected(self):
        surf = solve_g_lattice(CALL, LatticeSpec(1.0, 3000.0, n_y=100, v_lo=0.0, v_hi=1.0))
        with pytest.raises(ValueError):
            extract_feedback_vol(surf)

    def test_convex_region_picks_vhi(self):
        # a strictly convex payoff that never touches f2 keeps V convex
        pair = GamePayoffPair(Call(100.0), Call(100.0, 1.0, 1e6))
        spec = LatticeSpec(1.0, 3000.0, n_y=300, v_lo=0.1, v_hi=0.4)
        fb = extract_feedback_vol(solve_g_lattice(pair, spec))
        assert fb.alpha0(100.0) == 0.4

    def test_concave_region_picks_vlo(self):
        # concave f1 with a far obstacle: the value stays concave
        f1 = Tabulated((50.0, 100.0, 150.0, 300.0), (50.0, 100.0, 110.0, 110.0))
        f2 = Tabulated((50.0, 100.0, 150.0, 300.0), (1e6, 1e6, 1e6, 1e6))
        spec = LatticeSpec(1.0, 3000.0, n_y=300, v_lo=0.1, v_hi=0.4)
        fb = extract_feedback_vol(solve_g_lattice(GamePayoffPair(f1, f2), spec))
        assert fb.alpha0(100.0) == 0.1

    def test_table_shape(self):
        surf = solve_g_lattice(CALL, LatticeSpec(1.0, 3000.0, n_y=100, v_hi=1.0, n_store=5))
        fb = extract_feedback_vol(surf)
        assert fb.alpha.shape == (5, 100) and fb.times[0] == 0.0 and math.isclose(fb.times[-1], 1.0)
