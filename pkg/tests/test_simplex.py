"""
Tests for the dense two-phase simplex.
"""

import os
import sys

import numpy as np
import pytest
from scipy.optimize import linprog

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.icusir.errors import DomainError, IterationLimit
from src.icusir.simplex import (
    LinearProgramSpec,
    LPStatus,
    maximize_over_inequalities,
    solve_lp,
)


class TestSolveLP:
    """Tests for solve_lp."""

    def test_textbook_maximum(self):
        """max 3x + 2y on a small polytope, with its multipliers."""
        spec = LinearProgramSpec(
            objective=[3.0, 2.0],
            A=[[1.0, 1.0], [1.0, 3.0], [1.0, 0.0]],
            senses=["<=", "<=", "<="],
            b=[4.0, 9.0, 3.0],
        )
        res = solve_lp(spec)
        assert res.optimal
        assert res.value == pytest.approx(11.0)
        np.testing.assert_allclose(res.x, [3.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(res.duals, [2.0, 0.0, 1.0], atol=1e-12)

    def test_greater_equal_rows(self):
        """Phase 1 finds a start for >= and = rows."""
        spec = LinearProgramSpec(
            objective=[1.0, 1.0],
            A=[[1.0, 2.0], [3.0, 1.0]],
            senses=[">=", ">="],
            b=[2.0, 3.0],
            maximize=False,
        )
        res = solve_lp(spec)
        assert res.optimal
        assert res.value == pytest.approx(1.4)
        assert res.duals.min() >= -1e-12

    def test_infeasible(self):
        """x <= 1 and x >= 2 cannot both hold."""
        spec = LinearProgramSpec([1.0], [[1.0], [1.0]], ["<=", ">="], [1.0, 2.0])
        assert solve_lp(spec).status is LPStatus.INFEASIBLE

    def test_unbounded(self):
        """max x with only x >= 1 is unbounded."""
        spec = LinearProgramSpec([1.0], [[1.0]], [">="], [1.0])
        assert solve_lp(spec).status is LPStatus.UNBOUNDED

    def test_free_and_bounded_variables(self):
        """Free and doubly bounded variables are handled by substitution."""
        spec = LinearProgramSpec(
            objective=[1.0, -1.0],
            A=[[1.0, 1.0]],
            senses=["="],
            b=[0.5],
            bounds=[(None, 2.0), (-3.0, None)],
        )
        res = solve_lp(spec)
        assert res.optimal
        np.testing.assert_allclose(res.x, [2.0, -1.5], atol=1e-12)
        assert res.value == pytest.approx(3.5)

    def test_degenerate_does_not_cycle(self):
        """A classic cycling example terminates under Bland's rule."""
        spec = LinearProgramSpec(
            objective=[10.0, -57.0, -9.0, -24.0],
            A=[[0.5, -5.5, -2.5, 9.0], [0.5, -1.5, -0.5, 1.0], [1.0, 0.0, 0.0, 0.0]],
            senses=["<=", "<=", "<="],
            b=[0.0, 0.0, 1.0],
        )
        res = solve_lp(spec)
        assert res.optimal
        assert res.value == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_highs(self, seed):
        """Random 20 x 40 problems agree with scipy's HiGHS to 1e-7."""
        rng = np.random.default_rng(seed)
        A = rng.uniform(0.1, 1.0, size=(20, 40))
        b = rng.uniform(1.0, 5.0, size=20)
        c = rng.uniform(0.0, 1.0, size=40)
        res = solve_lp(LinearProgramSpec(c, A, ["<="] * 20, b))
        ref = linprog(-c, A_ub=A, b_ub=b, bounds=[(0, None)] * 40, method="highs")
        assert res.optimal
        assert res.value == pytest.approx(-ref.fun, abs=1e-7)
        assert np.all(A @ res.x <= b + 1e-9)
        assert res.duals @ b == pytest.approx(res.value, abs=1e-7)

    def test_row_scaling_invariance(self):
        """Scaling a row changes neither the value nor the point."""
        rng = np.random.default_rng(9)
        A = rng.uniform(0.1, 1.0, size=(6, 8))
        b = rng.uniform(1.0, 2.0, size=6)
        c = rng.uniform(0.0, 1.0, size=8)
        base = solve_lp(LinearProgramSpec(c, A, ["<="] * 6, b))
        A2, b2 = A.copy(), b.copy()
        A2[2] *= 1e3
        b2[2] *= 1e3
        scaled = solve_lp(LinearProgramSpec(c, A2, ["<="] * 6, b2))
        assert scaled.value == pytest.approx(base.value, rel=1e-10)
        assert scaled.duals[2] == pytest.approx(base.duals[2] / 1e3, rel=1e-8, abs=1e-12)

    def test_pivot_limit(self):
        """Exceeding the pivot cap raises IterationLimit."""
        rng = np.random.default_rng(1)
        A = rng.uniform(0.1, 1.0, size=(10, 20))
        spec = LinearProgramSpec(np.ones(20), A, ["<="] * 10, np.ones(10))
        with pytest.raises(IterationLimit):
            solve_lp(spec, max_pivots=1)

    def test_malformed_spec(self):
        """Mismatched shapes and unknown senses are rejected."""
        with pytest.raises(DomainError):
            LinearProgramSpec([1.0, 1.0], [[1.0, 1.0]], ["<=", "<="], [1.0])
        with pytest.raises(DomainError):
            LinearProgramSpec([1.0], [[1.0]], ["<"], [1.0])
        with pytest.raises(DomainError):
            LinearProgramSpec([1.0], [[np.inf]], ["<="], [1.0])


class TestMaximizeOverInequalities:
    """Tests for the dual-side solver used by the backward step."""

    def test_small_polytope(self):
        """max x + y over x <= 1, y <= 2, x + y <= 3."""
        res = maximize_over_inequalities(
            np.array([1.0, 1.0]),
            np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
            np.array([1.0, 2.0, 3.0]),
            coef_bound=100.0,
        )
        assert res.optimal
        assert res.value == pytest.approx(3.0)
        np.testing.assert_allclose(res.x, [1.0, 2.0], atol=1e-10)
        assert res.meta["dual_value"] == pytest.approx(3.0)

    def test_coefficient_bound_caps_value(self):
        """Without other limits the box |x| <= bound decides."""
        res = maximize_over_inequalities(
            np.array([1.0, 0.0]),
            np.array([[0.0, 1.0]]),
            np.array([1.0]),
            coef_bound=5.0,
        )
        assert res.value == pytest.approx(5.0)
        assert res.x[0] == pytest.approx(5.0)

    def test_negative_variables_allowed(self):
        """Variables are free within the coefficient box."""
        res = maximize_over_inequalities(
            np.array([-1.0]),
            np.array([[-1.0]]),
            np.array([2.0]),
            coef_bound=10.0,
        )
        assert res.value == pytest.approx(2.0)
        assert res.x[0] == pytest.approx(-2.0)

    def test_infeasible_system(self):
        """x <= -1 and -x <= -1 has no solution."""
        res = maximize_over_inequalities(
            np.array([1.0]),
            np.array([[1.0], [-1.0]]),
            np.array([-1.0, -1.0]),
            coef_bound=10.0,
        )
        assert res.status is LPStatus.INFEASIBLE


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
