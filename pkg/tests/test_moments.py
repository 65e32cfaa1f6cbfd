"""
Tests for polynomials, the Jacobi eigensolver and occupation-measure moments.
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.icusir.dynamics import ConstantControl, PiecewiseConstant, integrate
from src.icusir.errors import DomainError, HorizonMismatch, MissingMoment
from src.icusir.linalg import jacobi_eigenvalues
from src.icusir.moments import (
    MomentVector,
    box_localizers,
    dirac_terminal_moments,
    localized_matrix,
    m1_indices,
    m2_indices,
    moment_constraint_residual,
    moment_matrix_psd_check,
    trajectory_to_moments,
)
from src.icusir.params import State
from src.icusir.polynomials import Polynomial, monomial_exponents


def dirac_vector(points, r=1) -> MomentVector:
    return MomentVector(r=r, T=1.0, q=0.1, m2=dirac_terminal_moments(points, r))


class TestPolynomials:
    """Tests for monomial bases and polynomial evaluation."""

    def test_graded_order(self):
        """Exponents come by total degree, then lexicographically descending."""
        assert monomial_exponents(2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
        assert len(monomial_exponents(3)) == 10
        assert len(monomial_exponents(2, nvars=3)) == 10
        assert monomial_exponents(-1) == []

    def test_evaluate(self):
        """Scalar and array evaluation agree."""
        poly = Polynomial.from_terms({(2, 0): 1.0, (0, 1): 3.0})
        assert poly(2.0, 5.0) == pytest.approx(19.0)
        vals = poly(np.array([1.0, 2.0]), np.array([0.0, 5.0]))
        np.testing.assert_allclose(vals, [1.0, 19.0])
        assert poly.degree == 2

    def test_scaled_terms(self):
        """terms() rewrites a scaled polynomial in raw monomials."""
        scaled = Polynomial.from_terms({(2, 0): 1.0, (1, 1): -2.0, (0, 1): 3.0}, scale=(0.5, 0.05))
        raw = Polynomial.from_terms(scaled.terms())
        rng = np.random.default_rng(0)
        for s, i in rng.uniform(0, 1, size=(10, 2)):
            assert raw(s, i) == pytest.approx(scaled(s, i), rel=1e-12)

    def test_partial(self):
        """Partial derivatives act on the unscaled variables."""
        poly = Polynomial.from_terms({(2, 1): 1.0, (0, 1): 3.0}, scale=(0.5, 0.05))
        h = 1e-6
        ds = (poly(1.5 + h, 0.2) - poly(1.5 - h, 0.2)) / (2 * h)
        di = (poly(1.5, 0.2 + h) - poly(1.5, 0.2 - h)) / (2 * h)
        assert poly.partial(0)(1.5, 0.2) == pytest.approx(ds, rel=1e-6)
        assert poly.partial(1)(1.5, 0.2) == pytest.approx(di, rel=1e-6)
        assert Polynomial.from_terms({(0, 0): 4.0}).partial(0)(0.3, 0.3) == 0.0

    def test_nan_rejected(self):
        """NaN coefficients are refused."""
        with pytest.raises(DomainError):
            Polynomial.from_terms({(1, 0): math.nan})


class TestJacobi:
    """Tests for the symmetric eigensolver."""

    def test_matches_numpy(self):
        """Eigenvalues agree with numpy.linalg.eigvalsh."""
        rng = np.random.default_rng(3)
        for n in (1, 3, 6, 10):
            X = rng.normal(size=(n, n))
            S = X + X.T
            np.testing.assert_allclose(jacobi_eigenvalues(S), np.linalg.eigvalsh(S), atol=1e-10)

    def test_rejects_bad_input(self):
        """Non-square and non-symmetric inputs raise DomainError."""
        with pytest.raises(DomainError):
            jacobi_eigenvalues(np.ones((2, 3)))
        with pytest.raises(DomainError):
            jacobi_eigenvalues(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestMomentVector:
    """Tests for moment storage and embedding."""

    def test_index_sets(self):
        """m1 covers degree 2r+1 in (s, i) times {1, a}; m2 covers degree 2r."""
        assert len(m1_indices(0)) == 6
        assert len(m1_indices(1)) == 20
        assert len(m2_indices(1)) == 6
        assert (3, 0, 1) in m1_indices(1)

    def test_missing_index(self):
        """Lookups outside the stored range raise MissingMoment."""
        mv = dirac_vector([(State(0.5, 0.02), 1.0)])
        with pytest.raises(MissingMoment):
            mv.terminal(3, 0)
        with pytest.raises(MissingMoment):
            mv.first(0, 0, 0)

    def test_equilibrium_mass(self, p_lp):
        """At a disease-free state m1 integrates the discount weight only."""
        T = 10.0
        tr = integrate(p_lp, State(0.5, 0.0), ConstantControl(0.0), T, step=1e-2)
        mv = trajectory_to_moments(tr, p_lp, T, r=1)
        mass = 1.0 - math.exp(-p_lp.q * T)
        assert mv.first(0, 0, 0) == pytest.approx(mass, rel=1e-9)
        assert mv.first(1, 0, 0) == pytest.approx(0.5 * mass, rel=1e-9)
        assert mv.first(0, 1, 0) == 0.0
        assert mv.terminal(1, 0) == pytest.approx(0.5)

    def test_horizon_mismatch(self, p_lp):
        """A trajectory shorter than T is rejected."""
        tr = integrate(p_lp, State(0.5, 0.01), ConstantControl(0.0), 5.0, step=1e-2)
        with pytest.raises(HorizonMismatch):
            trajectory_to_moments(tr, p_lp, 10.0, r=1)

    @pytest.mark.parametrize("control", [
        ConstantControl(0.6),
        PiecewiseConstant(((0.0, 0.6), (10.0, 0.0))),
        PiecewiseConstant(((0.0, 0.0), (4.5, 0.3), (17.25, 0.6))),
    ])
    def test_identity_holds_on_trajectories(self, p_lp, control):
        """Embedded trajectories satisfy the linear moment identities."""
        T = 30.0
        x0 = State(0.45, 0.03)
        tr = integrate(p_lp, x0, control, T, step=1e-2, check_simplex=False)
        mv = trajectory_to_moments(tr, p_lp, T, r=2)
        assert moment_constraint_residual(mv, p_lp, x0) <= 1e-6

    def test_identity_needs_discount(self, p):
        """q = 0 is refused."""
        mv = MomentVector(r=0, T=1.0, q=0.0)
        with pytest.raises(DomainError):
            moment_constraint_residual(mv, p, State(0.5, 0.01))

    def test_combine(self):
        """Mixtures interpolate moments linearly."""
        a = dirac_vector([(State(0.2, 0.01), 1.0)])
        b = dirac_vector([(State(0.6, 0.03), 1.0)])
        mix = a.combine(b, 0.25)
        assert mix.terminal(1, 0) == pytest.approx(0.25 * 0.2 + 0.75 * 0.6)
        assert mix.terminal(0, 2) == pytest.approx(0.25 * 0.01 ** 2 + 0.75 * 0.03 ** 2)
        with pytest.raises(DomainError):
            a.combine(b, 1.5)

    def test_json(self, p_lp):
        """JSON export keeps every stored moment."""
        T = 5.0
        tr = integrate(p_lp, State(0.45, 0.03), ConstantControl(0.6), T, step=1e-2)
        mv = trajectory_to_moments(tr, p_lp, T, r=1)
        back = MomentVector.from_json(mv.to_json())
        assert back.m1 == mv.m1
        assert back.m2 == mv.m2
        assert (back.r, back.T, back.q) == (1, T, p_lp.q)


class TestMomentMatrices:
    """Tests for the PSD diagnostics."""

    def test_dirac_is_psd(self, p):
        """Moment matrices of point masses inside the box are PSD."""
        mv = dirac_vector([(State(0.3, 0.02), 0.4), (State(0.5, 0.05), 0.6)], r=2)
        report = moment_matrix_psd_check(mv, box_localizers(p))
        assert report.passed
        assert set(report.min_eigenvalues) == {"moment", "s_box", "i_box"}

    def test_outside_box_detected(self, p):
        """A point mass beyond the box fails its localizer."""
        mv = dirac_vector([(State(0.8, 0.02), 1.0)])
        report = moment_matrix_psd_check(mv, box_localizers(p))
        assert not report.passed
        assert report.min_eigenvalues["s_box"] < 0
        assert report.min_eigenvalues["moment"] >= -1e-8

    def test_negative_variance_detected(self):
        """A vector with m2(2,0) < m2(1,0)^2 is not a moment sequence."""
        m2 = {(0, 0): 1.0, (1, 0): 0.5, (0, 1): 0.0, (2, 0): 0.1, (1, 1): 0.0, (0, 2): 0.0}
        report = moment_matrix_psd_check(MomentVector(r=1, T=1.0, q=0.1, m2=m2))
        assert not report.passed
        assert report.worst < 0

    def test_localized_matrix_shape(self, p):
        """Localizing by a quadratic drops one degree from the basis."""
        mv = dirac_vector([(State(0.3, 0.02), 1.0)], r=2)
        assert localized_matrix(mv).shape == (6, 6)
        assert localized_matrix(mv, box_localizers(p)["i_box"]).shape == (3, 3)

    @pytest.mark.parametrize("r", [1, 2, 3])
    @pytest.mark.parametrize("q", [0.05, 0.1])
    @pytest.mark.parametrize("T", [10.0, 30.0])
    @pytest.mark.parametrize("control", [
        ConstantControl(0.6),
        PiecewiseConstant(((0.0, 0.3), (5.0, 0.6))),
    ])
    def test_embedded_trajectories_are_psd(self, p, r, q, T, control):
        """Terminal and occupation moments of a path inside the box are moment sequences."""
        x0 = State(0.45, 0.03)
        tr = integrate(p, x0, control, T, step=1e-2)
        assert tr.max_infection() <= p.istar
        mv = trajectory_to_moments(tr, p, T, r, q)
        assert moment_constraint_residual(mv, p, x0) <= 1e-6

        localizers = box_localizers(p)
        terminal = moment_matrix_psd_check(mv, localizers)
        assert terminal.passed, terminal.min_eigenvalues

        occupation = MomentVector(r, T, q, m2={idx: mv.first(*idx, 0) for idx in m2_indices(r)})
        report = moment_matrix_psd_check(occupation, localizers)
        assert report.passed, report.min_eigenvalues
        assert set(report.min_eigenvalues) == {"moment", "s_box", "i_box"}

    def test_needs_r_one(self):
        """r = 0 has no moment matrix."""
        with pytest.raises(DomainError):
            moment_matrix_psd_check(MomentVector(r=0, T=1.0, q=0.1, m2={(0, 0): 1.0}))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
