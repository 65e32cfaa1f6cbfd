"""
Tests for reachable-set sampling and membership.
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.icusir.dynamics import PiecewiseConstant, integrate
from src.icusir.errors import DomainError
from src.icusir.params import State
from src.icusir.policy import greedy_trajectory
from src.icusir.reachable import (
    branch_infection,
    membership,
    reachable_spec,
    reachable_zone_mask,
)

X0 = State(0.6, 0.02)
T = 20.0


class TestReachableSpec:
    """Tests for the extremal curves."""

    def test_branches_on_level_sets(self, p):
        """Branch samples keep their constant-control invariant."""
        spec = reachable_spec(p, X0, T)
        for k, pts in ((spec.k_upper, spec.upper_branch), (spec.k_lower, spec.lower_branch)):
            s, i = pts[:, 0], pts[:, 1]
            pos = i > 0
            h = s[pos] + i[pos] - k * np.log(s[pos])
            h0 = X0.s + X0.i - k * np.log(X0.s)
            np.testing.assert_allclose(h, h0, atol=1e-12)

    def test_branch_order(self, p):
        """The a = 0 curve lies above the a = abar curve left of x0."""
        s = np.linspace(0.45, 0.59, 15)
        up = branch_infection(p.green_threshold, X0, s)
        down = branch_infection(p.yellow_threshold, X0, s)
        assert np.all(up > down)

    def test_branches_admissible(self, p):
        """Branch samples never exceed i* and stay viable."""
        spec = reachable_spec(p, X0, T)
        assert spec.points()[:, 1].max() <= p.istar + 1e-9
        assert reachable_zone_mask(p, spec).all()

    def test_infinite_horizon_limits(self, p):
        """With T = None the left limits are the final sizes of the two curves."""
        spec = reachable_spec(p, X0)
        s_free, s_confined = spec.s_lower_limits
        assert s_free < p.green_threshold
        assert s_free < s_confined < X0.s

    def test_horizon_limits_grow_with_T(self, p):
        """Longer horizons reach further left."""
        short = reachable_spec(p, X0, 5.0).s_lower_limits
        long = reachable_spec(p, X0, 30.0).s_lower_limits
        assert long[0] < short[0] < X0.s
        assert long[1] < short[1] < X0.s

    def test_to_rows(self, p):
        """Rows carry the branch label."""
        spec = reachable_spec(p, X0, T, n_points=20)
        rows = spec.to_rows()
        assert {row["branch"] for row in rows} == {"a0", "abar"}
        assert len(rows) == len(spec.points())

    def test_bad_start(self, p):
        """Infeasible starts and tiny sample counts are rejected."""
        with pytest.raises(DomainError):
            reachable_spec(p, State(0.9, 0.01), T)
        with pytest.raises(DomainError):
            reachable_spec(p, X0, T, n_points=1)


class TestMembership:
    """Tests for membership of simulated states."""

    def test_degenerate_horizon(self, p):
        """A vanishing horizon leaves only x0."""
        spec = reachable_spec(p, X0, 1e-9)
        assert spec.degenerate
        assert membership(spec, X0)
        assert not membership(spec, State(X0.s - 0.01, X0.i))

    def test_admissible_endpoints_are_members(self, p):
        """Endpoints of admissible random bang-bang paths lie in the set."""
        spec = reachable_spec(p, X0, T)
        rng = np.random.default_rng(2)
        checked = 0
        for _ in range(200):
            times = np.sort(rng.uniform(0.0, T, 3))
            levels = rng.choice([0.0, p.abar], size=4, p=[0.3, 0.7])
            bps = ((0.0, float(levels[0])),) + tuple(
                (float(t), float(a)) for t, a in zip(times, levels[1:]))
            tr = integrate(p, X0, PiecewiseConstant(bps), T, step=1e-2)
            if tr.max_infection() > p.istar:
                continue
            assert membership(spec, tr.endpoint, 1e-6)
            checked += 1
        assert checked > 10

    def test_greedy_path_is_member(self, p):
        """Greedy states up to T lie in the set."""
        spec = reachable_spec(p, X0, T)
        tr = greedy_trajectory(p, X0, horizon=T, step=1e-2)
        for s, i in zip(tr.s[::10], tr.i[::10]):
            assert membership(spec, State(float(s), float(i)), 1e-6)

    def test_far_points_rejected(self, p):
        """Points right of x0 or above the free curve are outside."""
        spec = reachable_spec(p, X0, T)
        assert not membership(spec, State(X0.s + 0.05, X0.i))
        s = 0.55
        above = float(branch_infection(p.green_threshold, X0, np.array(s))) + 0.01
        assert not membership(spec, State(s, above))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
