"""
Reachable sets of the controlled SIR system.

Every admissible path from x0 stays between the two constant-control curves
through x0: along a path, di/ds = -1 + gamma/(beta(1-a) s) lies between its
values for a = 0 and a = abar. The a = 0 curve bounds the set from above,
the a = abar curve from below, and within horizon T no path gets further
left than the uncontrolled one.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from loguru import logger
from scipy.spatial import Delaunay, QhullError

from .dynamics import ConstantControl, integrate
from .errors import DomainError
from .params import EpidemicParams, State
from .roots import level_crossing
from .zones import ZERO_INFECTION, ZoneLabel, classify, psi

MEMBER_TOL = 1e-9
LIMIT_STEP = 1e-2


def branch_infection(k: float, x0: State, s: np.ndarray) -> np.ndarray:
    """i on the constant-control curve through x0: s + i = s0 + i0 + k log(s/s0)."""
    return x0.s + x0.i + k * np.log(s / x0.s) - s


@dataclass
class ReachableSpec:
    x0: State
    T: Optional[float]
    upper_branch: np.ndarray  # (n, 2) points (s, i) of the a = 0 curve
    lower_branch: np.ndarray  # (n, 2) points of the a = abar curve
    s_lower_limits: tuple[float, float]  # leftmost s on each branch
    k_upper: float
    k_lower: float
    istar: float

    @property
    def degenerate(self) -> bool:
        return min(self.s_lower_limits) >= self.x0.s - MEMBER_TOL

    def points(self) -> np.ndarray:
        return np.vstack([self.upper_branch, self.lower_branch])

    def to_rows(self) -> list[dict]:
        rows = [{"branch": "a0", "s": s, "i": i} for s, i in self.upper_branch]
        rows += [{"branch": "abar", "s": s, "i": i} for s, i in self.lower_branch]
        return rows


def _horizon_limit(p: EpidemicParams, x0: State, a: float, T: float) -> float:
    tr = integrate(p, x0, ConstantControl(a), T, min(LIMIT_STEP, T), check_simplex=False)
    return float(tr.s[-1])


def reachable_spec(
    p: EpidemicParams,
    x0: State,
    T: Optional[float] = None,
    n_points: int = 200,
) -> ReachableSpec:
    """
    Sample the extremal curves of the reachable set from x0.

    Args:
        p: parameters
        x0: start in the yellow zone
        T: horizon; None gives the infinite-horizon set
        n_points: samples per branch
    """
    if not classify(p, x0).viable:
        raise DomainError(f"reachable set needs a start in the yellow zone, got {x0}")
    if n_points < 2:
        raise DomainError("n_points must be at least 2")
    c, k = p.green_threshold, p.yellow_threshold

    if x0.i <= ZERO_INFECTION or (T is not None and T <= 0):
        limits = (x0.s, x0.s)
    elif T is None:
        limits = (level_crossing(c, x0.s, x0.i, 0.0, upper=False),
                  level_crossing(k, x0.s, x0.i, 0.0, upper=False))
    else:
        limits = (_horizon_limit(p, x0, 0.0, T), _horizon_limit(p, x0, p.abar, T))
    limits = (min(limits[0], x0.s), min(limits[1], x0.s))

    def branch(kk: float, s_min: float) -> np.ndarray:
        s = np.linspace(s_min, x0.s, n_points) if s_min < x0.s else np.array([x0.s])
        i = np.maximum(branch_infection(kk, x0, s), 0.0)
        keep = i <= p.istar + MEMBER_TOL
        keep &= np.array([sv <= psi(p, min(iv, p.istar)) + MEMBER_TOL for sv, iv in zip(s, i)])
        return np.column_stack([s[keep], i[keep]])

    spec = ReachableSpec(x0, T, branch(c, limits[0]), branch(k, limits[1]), limits, c, k, p.istar)
    logger.debug(f"reachable set from ({x0.s:.6g}, {x0.i:.6g}), T={T}: s limits {limits}")
    return spec


def _in_band(spec: ReachableSpec, x: State, tol: float) -> bool:
    x0 = spec.x0
    if not spec.s_lower_limits[0] - tol <= x.s <= x0.s + tol or x.i > spec.istar + tol:
        return False
    s = min(max(x.s, 1e-300), x0.s)
    hi = branch_infection(spec.k_upper, x0, np.array(s))
    lo = branch_infection(spec.k_lower, x0, np.array(s))
    return float(lo) - tol <= x.i <= float(hi) + tol


def _in_hull(spec: ReachableSpec, x: State) -> bool:
    pts = spec.points()
    if len(pts) < 3:
        return False
    try:
        hull = Delaunay(pts)
    except QhullError:
        return False
    return bool(hull.find_simplex(np.array([[x.s, x.i]]))[0] >= 0)


def membership(spec: ReachableSpec, x: State, tol: float = MEMBER_TOL) -> bool:
    """Whether x belongs to the reachable set described by spec."""
    if spec.degenerate:
        return math.hypot(x.s - spec.x0.s, x.i - spec.x0.i) <= tol
    return _in_band(spec, x, tol) or _in_hull(spec, x)


def reachable_zone_mask(p: EpidemicParams, spec: ReachableSpec) -> np.ndarray:
    """Zone labels of the branch samples (all must be viable)."""
    return np.array([classify(p, State(s, i)) != ZoneLabel.INFEASIBLE for s, i in spec.points()])
