"""
Truncated moments of occupation measures.

m1 holds the q e^{-qt}-weighted moments of (s, i, a) along [0, T], so its
total mass is 1 - e^{-qT}; m2 holds the moments of the terminal Dirac.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field
from scipy.integrate import simpson

from .dynamics import Trajectory
from .errors import DomainError, HorizonMismatch, MissingMoment
from .linalg import jacobi_eigenvalues
from .params import EpidemicParams, State
from .polynomials import Polynomial, monomial_exponents

PSD_TOL = 1e-8
HORIZON_TOL = 1e-9

Index1 = tuple[int, int, int]
Index2 = tuple[int, int]


def m1_indices(r: int) -> list[Index1]:
    return [(a1, a2, a3) for a1, a2 in monomial_exponents(2 * r + 1) for a3 in (0, 1)]


def m2_indices(r: int) -> list[Index2]:
    return [tuple(e) for e in monomial_exponents(2 * r)]


# =============================================================================
# Moment vector
# =============================================================================

class MomentVectorModel(BaseModel):
    """JSON shape of a moment vector."""

    r: int = Field(ge=0)
    q: float = Field(ge=0)
    T: float = Field(gt=0)
    m1: list[tuple[int, int, int, float]]
    m2: list[tuple[int, int, float]]


@dataclass
class MomentVector:
    r: int
    T: float
    q: float
    m1: dict[Index1, float] = field(default_factory=dict)
    m2: dict[Index2, float] = field(default_factory=dict)

    def first(self, a1: int, a2: int, a3: int) -> float:
        try:
            return self.m1[(a1, a2, a3)]
        except KeyError:
            raise MissingMoment(f"m1{(a1, a2, a3)} not stored (r={self.r})") from None

    def terminal(self, a1: int, a2: int) -> float:
        try:
            return self.m2[(a1, a2)]
        except KeyError:
            raise MissingMoment(f"m2{(a1, a2)} not stored (r={self.r})") from None

    def combine(self, other: "MomentVector", weight: float) -> "MomentVector":
        """weight * self + (1 - weight) * other."""
        if not 0.0 <= weight <= 1.0:
            raise DomainError(f"mixing weight {weight} outside [0, 1]")
        if (self.r, self.T, self.q) != (other.r, other.T, other.q):
            raise DomainError("moment vectors differ in r, T or q")
        mix = lambda x, y: weight * x + (1.0 - weight) * y
        return MomentVector(
            self.r, self.T, self.q,
            {k: mix(v, other.first(*k)) for k, v in self.m1.items()},
            {k: mix(v, other.terminal(*k)) for k, v in self.m2.items()},
        )

    def to_model(self) -> MomentVectorModel:
        return MomentVectorModel(
            r=self.r, q=self.q, T=self.T,
            m1=[(*k, v) for k, v in sorted(self.m1.items())],
            m2=[(*k, v) for k, v in sorted(self.m2.items())],
        )

    def to_json(self) -> str:
        return self.to_model().model_dump_json()

    @classmethod
    def from_json(cls, text: str) -> "MomentVector":
        model = MomentVectorModel.model_validate_json(text)
        return cls(
            model.r, model.T, model.q,
            {(a1, a2, a3): v for a1, a2, a3, v in model.m1},
            {(a1, a2): v for a1, a2, v in model.m2},
        )


def dirac_terminal_moments(points: Sequence[tuple[State, float]], r: int) -> dict[Index2, float]:
    """m2 of a finitely supported probability measure."""
    return {
        (a1, a2): sum(w * x.s ** a1 * x.i ** a2 for x, w in points)
        for a1, a2 in m2_indices(r)
    }


# =============================================================================
# Embedding of trajectories
# =============================================================================

def trajectory_to_moments(
    tr: Trajectory,
    p: EpidemicParams,
    T: float,
    r: int,
    q: Optional[float] = None,
) -> MomentVector:
    """
    Occupation-measure moments of a simulated trajectory on [0, T].

    Args:
        tr: trajectory starting at t = 0 and ending at t = T
        p: parameters; p.q is the discount unless q is given
        T: horizon
        r: degree parameter
        q: discount rate override
    """
    q = p.q if q is None else q
    if r < 0:
        raise DomainError(f"degree parameter must be >= 0, got {r}")
    if abs(tr.t[0]) > HORIZON_TOL or abs(tr.t[-1] - T) > HORIZON_TOL * max(1.0, T):
        raise HorizonMismatch(f"trajectory spans [{tr.t[0]}, {tr.t[-1]}], expected [0, {T}]")

    top = 2 * r + 1
    m1 = {idx: 0.0 for idx in m1_indices(r)}
    for start, stop in tr.pieces():
        idx = slice(start, stop + 1)
        t, s, i = tr.t[idx], tr.s[idx], tr.i[idx]
        a = tr.a[idx].copy()
        a[-1] = tr.a_left[stop]
        w = q * np.exp(-q * t)
        spow = [np.ones_like(s)]
        ipow = [np.ones_like(i)]
        for _ in range(top):
            spow.append(spow[-1] * s)
            ipow.append(ipow[-1] * i)
        for a1, a2, a3 in m1:
            y = w * spow[a1] * ipow[a2] * (a if a3 else 1.0)
            m1[(a1, a2, a3)] += float(simpson(y, x=t))

    end = tr.endpoint
    m2 = dirac_terminal_moments([(end, 1.0)], r)
    return MomentVector(r, T, q, m1, m2)


# =============================================================================
# Linear constraints
# =============================================================================

def moment_constraint_residuals(mv: MomentVector, p: EpidemicParams, x0: State) -> dict[Index2, float]:
    """
    Residual of the adjoint identity for f = e^{-qt} s^a1 i^a2, per index.

    e^{-qT} m2(a) - s0^a1 i0^a2 = (1/q) [ -q m1(a,0)
        - a1 beta (m1(a1,a2+1,0) - m1(a1,a2+1,1))
        + a2 beta (m1(a1+1,a2,0) - m1(a1+1,a2,1))
        - a2 gamma m1(a1,a2,0) ]
    """
    if mv.q <= 0:
        raise DomainError("the moment identity needs q > 0")
    q, beta, gamma = mv.q, p.beta, p.gamma
    decay = math.exp(-q * mv.T)
    out: dict[Index2, float] = {}
    for a1, a2 in m2_indices(mv.r):
        lhs = decay * mv.terminal(a1, a2) - x0.s ** a1 * x0.i ** a2
        rhs = -q * mv.first(a1, a2, 0)
        if a1:
            rhs -= a1 * beta * (mv.first(a1, a2 + 1, 0) - mv.first(a1, a2 + 1, 1))
        if a2:
            rhs += a2 * beta * (mv.first(a1 + 1, a2, 0) - mv.first(a1 + 1, a2, 1))
            rhs -= a2 * gamma * mv.first(a1, a2, 0)
        out[(a1, a2)] = lhs - rhs / q
    return out


def moment_constraint_residual(mv: MomentVector, p: EpidemicParams, x0: State) -> float:
    """Max absolute residual of the moment identities."""
    return max(abs(v) for v in moment_constraint_residuals(mv, p, x0).values())


# =============================================================================
# Moment matrices
# =============================================================================

@dataclass
class PSDReport:
    min_eigenvalues: dict[str, float]
    tol: float = PSD_TOL

    @property
    def passed(self) -> bool:
        return all(v >= -self.tol for v in self.min_eigenvalues.values())

    @property
    def worst(self) -> float:
        return min(self.min_eigenvalues.values())


def box_localizers(p: EpidemicParams, s_max: Optional[float] = None) -> dict[str, Polynomial]:
    """s (S - s) and i (i* - i) for the box [0, S] x [0, i*]."""
    S = p.yellow_threshold if s_max is None else s_max
    return {
        "s_box": Polynomial.from_terms({(1, 0): S, (2, 0): -1.0}),
        "i_box": Polynomial.from_terms({(0, 1): p.istar, (0, 2): -1.0}),
    }


def localized_matrix(mv: MomentVector, g: Optional[Polynomial] = None) -> np.ndarray:
    """M[u, v] = sum_g g_w m2(u + v + w) over monomials u, v of degree <= r - deg(g)/2."""
    terms = {(0, 0): 1.0} if g is None else g.terms()
    half = math.ceil(max(sum(k) for k in terms) / 2)
    basis = monomial_exponents(mv.r - half)
    M = np.zeros((len(basis), len(basis)))
    for a, u in enumerate(basis):
        for b, v in enumerate(basis[a:], start=a):
            val = sum(c * mv.terminal(u[0] + v[0] + w[0], u[1] + v[1] + w[1]) for w, c in terms.items())
            M[a, b] = M[b, a] = val
    return M


def moment_matrix_psd_check(
    mv: MomentVector,
    localizers: Optional[dict[str, Polynomial]] = None,
    tol: float = PSD_TOL,
) -> PSDReport:
    """Smallest eigenvalue of the m2 moment matrix and its localized versions."""
    if mv.r < 1:
        raise DomainError("moment matrix check needs r >= 1")
    mins = {"moment": float(jacobi_eigenvalues(localized_matrix(mv))[0])}
    for name, g in (localizers or {}).items():
        M = localized_matrix(mv, g)
        if M.size:
            mins[name] = float(jacobi_eigenvalues(M)[0])
    report = PSDReport(mins, tol)
    if not report.passed:
        logger.debug(f"moment matrices not PSD: {mins}")
    return report
