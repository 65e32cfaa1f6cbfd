"""
Tests for the greedy policy, the closed-form value W and the HJ residual.
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.icusir.costs import MultiplicativeCost
from src.icusir.dynamics import ConstantControl
from src.icusir.errors import NotDifferentiable, ZoneMismatch
from src.icusir.params import State
from src.icusir.policy import (
    discounted_policy_cost,
    greedy_feedback,
    greedy_simulate,
    greedy_trajectory,
    hj_residual,
    is_differentiable,
    psi_inverse,
    transit_jacobians,
    transit_quantities,
    value_gradient,
    value_W,
)
from src.icusir.zones import ZoneLabel, classify, phi, phi_sbar, psi

BAND = State(0.45, 0.03)
YELLOW = State(0.7, 0.01)


def central_difference(f, x: State, h: float = 1e-6) -> tuple[float, float]:
    ds = (f(State(x.s + h, x.i)) - f(State(x.s - h, x.i))) / (2 * h)
    di = (f(State(x.s, x.i + h)) - f(State(x.s, x.i - h))) / (2 * h)
    return ds, di


class TestGreedyFeedback:
    """Tests for the greedy feedback law."""

    def test_zero_in_interior(self, p):
        """No control away from the active boundary."""
        assert greedy_feedback(p, BAND) == 0.0

    def test_boundary_preserving_on_segment(self, p):
        """On i = i* the control keeps di/dt = 0."""
        x = State(0.4, p.istar)
        a = greedy_feedback(p, x)
        assert a == pytest.approx(1 - p.green_threshold / 0.4)
        assert p.beta * (1 - a) * x.s - p.gamma == pytest.approx(0.0, abs=1e-15)

    def test_full_confinement_on_psi(self, p):
        """On the yellow boundary right of the corner the control is abar."""
        i = 0.02
        assert greedy_feedback(p, State(psi(p, i), i)) == pytest.approx(p.abar)

    def test_psi_inverse(self, p):
        """psi_inverse inverts psi."""
        for i in (0.005, 0.02, 0.05):
            assert psi_inverse(p, psi(p, i)) == pytest.approx(i, abs=1e-12)


class TestTransit:
    """Tests for s1, s2 and their Jacobians."""

    def test_s1_on_band(self, p):
        """s1 lies on the uncontrolled level through x0 at i = i*."""
        tq = transit_quantities(p, BAND)
        assert tq.zone == ZoneLabel.BAND_MINUS_GREEN
        c = p.green_threshold
        h = lambda s, i: s + i - c * math.log(s)
        assert h(tq.s1, p.istar) == pytest.approx(h(BAND.s, BAND.i), abs=1e-12)
        assert p.green_threshold < tq.s1 < BAND.s
        with pytest.raises(ZoneMismatch):
            tq.require_s2()

    def test_s2_on_psi(self, p):
        """s2 is where the uncontrolled path from x0 meets psi."""
        tq = transit_quantities(p, YELLOW)
        assert tq.zone == ZoneLabel.YELLOW_MINUS_BAND
        assert psi(p, tq.i2) == pytest.approx(tq.s2, abs=1e-10)
        c = p.green_threshold
        h = lambda s, i: s + i - c * math.log(s)
        assert h(tq.s2, tq.i2) == pytest.approx(h(YELLOW.s, YELLOW.i), abs=1e-10)

    def test_corner_limits(self, p):
        """s1 -> gamma/beta on the green boundary, s2 -> k on the band boundary."""
        i = 0.03
        near_green = State(phi(p, i) + 1e-7, i)
        near_band = State(phi_sbar(p, p.yellow_threshold, i) + 1e-4, i)
        assert transit_quantities(p, near_green).s1 == pytest.approx(p.green_threshold, abs=1e-3)
        assert transit_quantities(p, near_band).s2 == pytest.approx(p.yellow_threshold, abs=1e-3)

    @pytest.mark.parametrize("x", [BAND, YELLOW, State(0.5, 0.045), State(0.75, 0.005)])
    def test_jacobians_match_differences(self, p, x):
        """Analytic transit Jacobians agree with central differences."""
        jac = transit_jacobians(p, x)
        attr = jac.quantity

        def f(y):
            return getattr(transit_quantities(p, y), attr)

        ds, di = central_difference(f, x)
        assert jac.ds_ds0 == pytest.approx(ds, rel=1e-5, abs=1e-7)
        assert jac.ds_di0 == pytest.approx(di, rel=1e-5, abs=1e-7)

    def test_outside_yellow_rejected(self, p):
        """Starts outside the yellow zone raise ZoneMismatch."""
        with pytest.raises(ZoneMismatch):
            transit_quantities(p, State(0.9, 0.01))


class TestValue:
    """Tests for W and its gradient."""

    def test_zero_on_green(self, p, affine):
        """W vanishes on G."""
        assert value_W(p, affine, State(0.2, 0.04)) == 0.0

    @pytest.mark.parametrize("x", [BAND, YELLOW, State(0.5, 0.045), State(0.6, 0.002)])
    def test_matches_simulation(self, p, affine, si_cost, x):
        """Closed-form W equals the cost along the simulated greedy path."""
        for cost in (affine, si_cost):
            w = value_W(p, cost, x)
            sim = greedy_simulate(p, x, cost, step=1e-2)
            assert sim.tau_green is not None
            assert abs(w - sim.cost) <= 1e-6 * (1 + w)

    @pytest.mark.parametrize("x", [BAND, YELLOW, State(0.5, 0.045), State(0.75, 0.005)])
    def test_gradient_matches_differences(self, p, affine, si_cost, x):
        """Analytic gradient agrees with central differences of W."""
        for cost in (affine, si_cost):
            assert is_differentiable(p, x)
            g = value_gradient(p, cost, x)
            fd = central_difference(lambda y: value_W(p, cost, y), x, h=1e-4)
            assert g[0] == pytest.approx(fd[0], rel=1e-4, abs=1e-5)
            assert g[1] == pytest.approx(fd[1], rel=1e-4, abs=1e-5)

    def test_gradient_undefined_on_band_boundary(self, p, affine):
        """W has a kink on the band boundary."""
        i = 0.03
        x = State(phi_sbar(p, p.yellow_threshold, i), i)
        assert not is_differentiable(p, x)
        with pytest.raises(NotDifferentiable):
            value_gradient(p, affine, x)

    def test_continuous_across_band_boundary(self, p, si_cost):
        """W from both sides of the band boundary agrees to 1e-3."""
        i = 0.03
        edge = phi_sbar(p, p.yellow_threshold, i)
        inside = value_W(p, si_cost, State(edge - 1e-4, i))
        outside = value_W(p, si_cost, State(edge + 1e-4, i))
        assert inside == pytest.approx(outside, abs=1e-3)


class TestHJ:
    """Tests for the HJ residual."""

    def test_admissible_cost_residual(self, p, si_cost, affine):
        """Residual at most 1e-8 with argmax a = 0 for admissible costs."""
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 200:
            x = State(rng.uniform(0.0, psi(p, 0.0)), rng.uniform(0.0, p.istar))
            if not is_differentiable(p, x):
                continue
            for cost in (si_cost, affine):
                res = hj_residual(p, cost, x)
                assert res.max_residual <= 1e-8
                assert res.argmax_a == 0.0
            checked += 1

    def test_violation_detected(self, p):
        """A cost breaking the greedy-optimality inequality leaves a positive residual."""
        cost = MultiplicativeCost(lambda s, i: np.exp(s) * i ** 2, "e^s*i^2")
        res = hj_residual(p, cost, BAND)
        assert res.max_residual > 1e-10
        assert res.argmax_a > 0


class TestGreedyTrajectory:
    """Tests for greedy synthesis."""

    def test_viability(self, p):
        """Greedy paths never exceed i*."""
        rng = np.random.default_rng(5)
        done = 0
        while done < 20:
            x = State(rng.uniform(0.0, psi(p, 0.0)), rng.uniform(0.0, p.istar))
            if not classify(p, x).viable:
                continue
            tr = greedy_trajectory(p, x, step=1e-2)
            assert tr.max_infection() <= p.istar + 1e-6
            done += 1

    def test_segments_from_yellow(self, p, affine):
        """From Y minus B the path flies, confines, then slides."""
        res = greedy_simulate(p, YELLOW, affine, step=1e-2)
        assert res.segments == ["flight", "flight", "slide"]
        assert res.trajectory.endpoint.s == pytest.approx(p.green_threshold, abs=1e-9)

    def test_horizon_truncation(self, p, affine):
        """A short horizon stops before the green zone."""
        res = greedy_simulate(p, YELLOW, affine, horizon=5.0, step=1e-2)
        assert res.tau_green is None
        assert res.trajectory.t[-1] == pytest.approx(5.0)

    def test_discounted_cost_orders_policies(self, p_lp, si_cost):
        """Discounted costs are finite for admissible policies and inf otherwise."""
        greedy = discounted_policy_cost(p_lp, si_cost, BAND, p_lp.q, step=5e-2)
        confine = discounted_policy_cost(p_lp, si_cost, BAND, p_lp.q, ConstantControl(p_lp.abar),
                                         step=5e-2)
        free = discounted_policy_cost(p_lp, si_cost, BAND, p_lp.q, ConstantControl(0.0), step=5e-2)
        assert 0 <= greedy < math.inf
        assert 0 <= confine < math.inf
        assert free == math.inf


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
