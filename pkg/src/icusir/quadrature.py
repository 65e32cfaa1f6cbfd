"""
One-dimensional quadrature helpers.
"""

from typing import Callable

import numpy as np
from scipy.integrate import quad_vec, simpson

from .dynamics import Trajectory
from .errors import IterationLimit


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-10,
    max_depth: int = 50,
) -> float:
    """Adaptive Simpson rule with Richardson correction."""
    if b == a:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) * (fa + 4 * fm + fb) / 6.0
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, est, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        fl, fr = f(0.5 * (lo + mid)), f(0.5 * (mid + hi))
        left = (mid - lo) * (flo + 4 * fl + fmid) / 6.0
        right = (hi - mid) * (fmid + 4 * fr + fhi) / 6.0
        delta = left + right - est
        if abs(delta) <= 15 * eps:
            total += left + right + delta / 15.0
        elif depth >= max_depth:
            raise IterationLimit(f"adaptive Simpson exceeded depth {max_depth} on [{lo}, {hi}]")
        else:
            stack.append((lo, mid, flo, fl, fmid, left, 0.5 * eps, depth + 1))
            stack.append((mid, hi, fmid, fr, fhi, right, 0.5 * eps, depth + 1))
    return total


def gauss_kronrod(f: Callable[[float], float], a: float, b: float, rel_tol: float = 1e-10) -> float:
    """Adaptive 15-point Gauss-Kronrod integral."""
    if b == a:
        return 0.0
    value, _ = quad_vec(f, a, b, epsabs=1e-14, epsrel=rel_tol, quadrature="gk15")
    return float(value)


def trajectory_integral(
    tr: Trajectory,
    integrand: Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray],
) -> float:
    """
    Integrate integrand(t, s, i, a) along a trajectory.

    Composite Simpson on each piece where the control is continuous; the last
    node of a piece uses the control arriving there.
    """
    total = 0.0
    for start, stop in tr.pieces():
        idx = slice(start, stop + 1)
        a = tr.a[idx].copy()
        a[-1] = tr.a_left[stop]
        y = integrand(tr.t[idx], tr.s[idx], tr.i[idx], a)
        y = np.broadcast_to(np.asarray(y, dtype=float), tr.t[idx].shape)
        total += float(simpson(y, x=tr.t[idx]))
    return total
