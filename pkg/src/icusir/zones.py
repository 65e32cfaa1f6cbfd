"""
Viability zones of the ICU-constrained SIR model.

Green zone G: no control ever needed. Yellow zone Y: some admissible control
keeps i <= i*. Band B: the part of Y bounded by the uncontrolled backward flow
through (gamma/(beta(1-abar)), i*). All curves are exact branch roots; the
interpolated tables exist for plotting only.
"""

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .dynamics import Event, TerminalEvent
from .errors import DomainError, SingularCorner
from .params import EpidemicParams, State
from .roots import level_crossing, level_residual

ZERO_INFECTION = 1e-12  # zone values at i = 0 are read here
CLASSIFY_TOL = 1e-12
BOUNDARY_TOL = 1e-9
MEMO_POINTS = 2048


class ZoneLabel(str, Enum):
    GREEN = "Green"
    BAND_MINUS_GREEN = "BandMinusGreen"
    YELLOW_MINUS_BAND = "YellowMinusBand"
    INFEASIBLE = "Infeasible"
    OUTSIDE_SIMPLEX = "OutsideSimplex"

    @property
    def viable(self) -> bool:
        return self in (ZoneLabel.GREEN, ZoneLabel.BAND_MINUS_GREEN, ZoneLabel.YELLOW_MINUS_BAND)


class CurveKind(str, Enum):
    GREEN = "Green"
    YELLOW = "Yellow"
    B_GENERAL = "BGeneral"
    PSI_TILDE = "PsiTilde"


class Branch(str, Enum):
    ABOVE = "AboveThreshold"
    BELOW = "BelowThreshold"


def _level(p: EpidemicParams, i: float) -> float:
    """Validated infection level; i = 0 maps to the i -> 0+ limit."""
    if i < 0 or i > p.istar * (1.0 + 1e-14):
        raise DomainError(f"infection level {i} outside (0, {p.istar}]")
    return min(max(i, ZERO_INFECTION), p.istar)


# =============================================================================
# Curves
# =============================================================================

def phi(p: EpidemicParams, i: float) -> float:
    """Green boundary: x >= gamma/beta with -x + (gamma/beta) log x = i - i* + c log c - c."""
    c = p.green_threshold
    return level_crossing(c, c, p.istar, _level(p, i), upper=True)


def psi(p: EpidemicParams, i: float) -> float:
    """Yellow boundary, the upper branch through (gamma/(beta(1-abar)), i*)."""
    k = p.yellow_threshold
    return level_crossing(k, k, p.istar, _level(p, i), upper=True)


def phi_sbar(p: EpidemicParams, sbar: float, i: float) -> float:
    """Uncontrolled level curve through (sbar, i*), on the same side of gamma/beta as sbar."""
    c, k = p.green_threshold, p.yellow_threshold
    if not c * (1 - 1e-12) <= sbar <= k * (1 + 1e-12):
        raise DomainError(f"sbar={sbar} outside [{c}, {k}]")
    return level_crossing(c, sbar, p.istar, _level(p, i), upper=sbar >= c)


def psi_tilde(p: EpidemicParams, i: float) -> float:
    """Full-confinement level curve through (gamma/beta, i*), branch x <= gamma/beta."""
    return level_crossing(p.yellow_threshold, p.green_threshold, p.istar, _level(p, i), upper=False)


def psi_tilde_derivative(p: EpidemicParams, i: float) -> float:
    return 1.0 / (-1.0 + p.yellow_threshold / psi_tilde(p, i))


def phi_sbar_derivative(p: EpidemicParams, sbar: float, i: float) -> float:
    """d phi^sbar / di = beta phi / (gamma - beta phi)."""
    x = phi_sbar(p, sbar, i)
    return p.beta * x / (p.gamma - p.beta * x)


@dataclass(frozen=True)
class ZoneCurve:
    """One boundary curve i -> s with its defining equation."""

    p: EpidemicParams
    kind: CurveKind
    sbar: Optional[float] = None

    @property
    def branch(self) -> Branch:
        if self.kind == CurveKind.PSI_TILDE:
            return Branch.BELOW
        if self.kind == CurveKind.B_GENERAL and self.sbar < self.p.green_threshold:
            return Branch.BELOW
        return Branch.ABOVE

    def __call__(self, i: float) -> float:
        if self.kind == CurveKind.GREEN:
            return phi(self.p, i)
        if self.kind == CurveKind.YELLOW:
            return psi(self.p, i)
        if self.kind == CurveKind.B_GENERAL:
            return phi_sbar(self.p, self.sbar, i)
        return psi_tilde(self.p, i)

    def _level_data(self) -> tuple[float, float]:
        c, k = self.p.green_threshold, self.p.yellow_threshold
        return {
            CurveKind.GREEN: (c, c),
            CurveKind.YELLOW: (k, k),
            CurveKind.B_GENERAL: (c, self.sbar),
            CurveKind.PSI_TILDE: (k, c),
        }[self.kind]

    def residual(self, i: float, x: Optional[float] = None) -> float:
        """Residual of the defining scalar equation at (x, i)."""
        k, s_ref = self._level_data()
        i = _level(self.p, i)
        return level_residual(k, s_ref, self.p.istar, self(i) if x is None else x, i)

    def smooth(self, i):
        """Monotone cubic interpolant of the memoized table; plotting only."""
        return _interpolant(self.p, self.kind, self.sbar)(i)


def zone_curves(p: EpidemicParams) -> dict[str, ZoneCurve]:
    return {
        "phi": ZoneCurve(p, CurveKind.GREEN),
        "b_curve": ZoneCurve(p, CurveKind.B_GENERAL, p.yellow_threshold),
        "psi": ZoneCurve(p, CurveKind.YELLOW),
        "psi_tilde": ZoneCurve(p, CurveKind.PSI_TILDE),
    }


def infection_grid(p: EpidemicParams, n: int) -> np.ndarray:
    """Log-spaced i-grid on [i*·1e-6, i*]."""
    return np.geomspace(p.istar * 1e-6, p.istar, n)


@lru_cache(maxsize=64)
def _interpolant(p: EpidemicParams, kind: CurveKind, sbar: Optional[float]) -> PchipInterpolator:
    curve = ZoneCurve(p, kind, sbar)
    grid = infection_grid(p, MEMO_POINTS)
    values = np.array([curve(float(i)) for i in grid])
    return PchipInterpolator(grid, values, extrapolate=True)


def curve_table(p: EpidemicParams, n: int = 200) -> list[dict[str, float]]:
    """Exact curve values on a log-spaced grid, with the i -> 0+ limits first."""
    curves = zone_curves(p)
    rows = []
    for i in [0.0, *infection_grid(p, n)]:
        row = {"i": float(i)}
        row.update({name: curve(float(i)) for name, curve in curves.items()})
        rows.append(row)
    return rows


def data_tips(p: EpidemicParams, population: Optional[int] = None) -> dict:
    """The four zone tips, optionally scaled to absolute counts."""
    tips = {
        "green_at_istar": phi(p, p.istar),
        "green_at_zero": phi(p, 0.0),
        "yellow_at_istar": psi(p, p.istar),
        "yellow_at_zero": psi(p, 0.0),
    }
    out = {"proportions": tips}
    if population is not None:
        out["population"] = population
        out["counts"] = {name: value * population for name, value in tips.items()}
    return out


# =============================================================================
# Classification and boundary predicates
# =============================================================================

def classify(p: EpidemicParams, x: State) -> ZoneLabel:
    """Zone of x; ties within 1e-12 go to the inner set."""
    if not x.in_simplex():
        return ZoneLabel.OUTSIDE_SIMPLEX
    if x.i > p.istar + CLASSIFY_TOL:
        return ZoneLabel.INFEASIBLE
    i = min(x.i, p.istar)
    if x.s <= phi(p, i) + CLASSIFY_TOL:
        return ZoneLabel.GREEN
    if x.s <= phi_sbar(p, p.yellow_threshold, i) + CLASSIFY_TOL:
        return ZoneLabel.BAND_MINUS_GREEN
    if x.s <= psi(p, i) + CLASSIFY_TOL:
        return ZoneLabel.YELLOW_MINUS_BAND
    return ZoneLabel.INFEASIBLE


def in_yellow(p: EpidemicParams, x: State) -> bool:
    return classify(p, x).viable


def in_M(p: EpidemicParams, x: State) -> bool:
    """Segment [gamma/beta, gamma/(beta(1-abar))] x {i*}."""
    return (abs(x.i - p.istar) <= BOUNDARY_TOL
            and p.green_threshold - BOUNDARY_TOL <= x.s <= p.yellow_threshold + BOUNDARY_TOL)


def in_D(p: EpidemicParams, x: State) -> bool:
    """Yellow zone with the segment M removed."""
    return in_yellow(p, x) and not in_M(p, x)


def active_boundary_contains(p: EpidemicParams, x: State) -> bool:
    """Membership in the part of the yellow boundary where the greedy control acts."""
    if in_M(p, x):
        return True
    if 0 < x.i <= p.istar + BOUNDARY_TOL:
        return abs(x.s - psi(p, min(x.i, p.istar))) <= BOUNDARY_TOL
    return False


def green_entry_event(p: EpidemicParams) -> Event:
    """Stop when a trajectory enters the green zone."""

    def gap(t: float, s: float, i: float) -> float:
        if i > p.istar or i < 0:
            return 1.0
        return s - phi(p, i)

    return Event(gap, direction=-1, label=TerminalEvent.HIT_GREEN, name="green")


def boundary_normal_product(p: EpidemicParams, sbar: float, x: State) -> float:
    """
    Inner product of the outward unit normal of B^sbar with the abar-controlled field.

    Raises:
        SingularCorner: at (sbar, i*)
        DomainError: x not on the active part of the boundary of B^sbar
    """
    on_top = abs(x.i - p.istar) <= BOUNDARY_TOL
    if on_top and abs(x.s - sbar) <= BOUNDARY_TOL:
        raise SingularCorner(f"normal undefined at the corner ({sbar}, {p.istar})")
    if on_top:
        if x.s > sbar:
            raise DomainError(f"{x} is right of the corner sbar={sbar}")
        return (p.beta * (1.0 - p.abar) * x.s - p.gamma) * p.istar

    curve = phi_sbar(p, sbar, x.i)
    if abs(x.s - curve) > BOUNDARY_TOL * max(1.0, curve):
        raise DomainError(f"{x} is not on the boundary of B^{sbar} (curve at {curve})")
    bf = p.beta * x.s
    slope = bf / (p.gamma - bf)
    return p.abar * p.gamma * x.i * slope / math.sqrt(1.0 + slope * slope)
