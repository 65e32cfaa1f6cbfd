"""
Bracketed root finding and the constant-control level curves.

Every boundary curve of the model is a branch of a level set of

    H_k(x, i) = x + i - k log x

for k = gamma/(beta(1-a)). Writing x = k(1 + z) turns the level equation
into z - log1p(z) = D with D >= 0, which stays well conditioned near the
double root x = k where the two branches meet.
"""

import math
from typing import Callable, Optional

from .errors import DomainError, NoRootError

BRACKET_WIDTH = 2.0  # upper branches search [k, k + 2]
LOWER_FLOOR = 1e-14  # lower branches search [1e-14, k]
MAX_ITER = 200
RESIDUAL_TOL = 1e-12
FLAT_TOL = 1e-15  # level offsets below this are the double root itself


def find_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    fprime: Optional[Callable[[float], float]] = None,
    guess: Optional[float] = None,
    max_iter: int = MAX_ITER,
) -> float:
    """
    Bisection safeguarded Newton iteration on a sign-changing bracket.

    Newton steps are taken whenever they stay inside the current bracket and
    shrink fast enough; otherwise the bracket is halved.

    Returns:
        x in [lo, hi] with f(x) == 0 to working precision.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NoRootError(f"no sign change on [{lo}, {hi}] (f={flo:.3e}, {fhi:.3e})")

    # xl carries the negative sign
    xl, xh = (lo, hi) if flo < 0 else (hi, lo)
    x = guess if guess is not None and min(lo, hi) < guess < max(lo, hi) else 0.5 * (lo + hi)
    dx_old = abs(hi - lo)
    dx = dx_old
    fx = f(x)

    for _ in range(max_iter):
        if fx == 0.0:
            return x
        df = fprime(x) if fprime is not None else 0.0
        out_of_bracket = ((x - xh) * df - fx) * ((x - xl) * df - fx) > 0.0
        if df == 0.0 or out_of_bracket or abs(2.0 * fx) > abs(dx_old * df):
            dx_old = dx
            dx = 0.5 * (xh - xl)
            x_new = xl + dx
        else:
            dx_old = dx
            dx = fx / df
            x_new = x - dx
        if abs(x_new - x) <= 4.0 * 2.2e-16 * max(1.0, abs(x_new)):
            return x_new
        x = x_new
        fx = f(x)
        if fx < 0:
            xl = x
        else:
            xh = x

    raise NoRootError(f"root refinement exceeded {max_iter} iterations on [{lo}, {hi}]")


def _flatness(z: float) -> float:
    return z - math.log1p(z)


def level_offset(k: float, s_ref: float, i_ref: float, i: float) -> float:
    """D such that the level crossing at infection i solves z - log1p(z) = D."""
    if k <= 0 or s_ref <= 0:
        raise DomainError(f"level curve needs k > 0 and s_ref > 0 (k={k}, s_ref={s_ref})")
    return _flatness(s_ref / k - 1.0) + (i_ref - i) / k


def level_residual(k: float, s_ref: float, i_ref: float, x: float, i: float) -> float:
    """Residual of -x + k log x = i - i_ref + k log s_ref - s_ref."""
    return (-x + k * math.log(x)) - (i - i_ref + k * math.log(s_ref) - s_ref)


def level_crossing(k: float, s_ref: float, i_ref: float, i: float, upper: bool) -> float:
    """
    Abscissa x with H_k(x, i) = H_k(s_ref, i_ref) on one branch.

    Args:
        k: branch threshold gamma/(beta(1-a))
        s_ref, i_ref: a point on the wanted level set
        i: infection level at which to read the curve
        upper: True for the x >= k branch, False for x <= k

    Returns:
        The crossing abscissa; exactly k when the level is the curve's apex.
    """
    target = level_offset(k, s_ref, i_ref, i)
    if target < 0.0:
        if target > -FLAT_TOL:
            target = 0.0
        else:
            raise NoRootError(f"level of ({s_ref}, {i_ref}) never reaches i={i} (offset {target:.3e})")
    if target <= FLAT_TOL:
        return k

    def g(z: float) -> float:
        return _flatness(z) - target

    def dg(z: float) -> float:
        return z / (1.0 + z)

    seed = math.sqrt(2.0 * target)
    if upper:
        lo, hi = 0.0, BRACKET_WIDTH / k
        guess = seed + 2.0 * target / 3.0
        if g(hi) < 0:
            raise NoRootError(f"upper branch root beyond bracket [{k}, {k + BRACKET_WIDTH}] at i={i}")
    else:
        lo, hi = LOWER_FLOOR / k - 1.0, 0.0
        guess = -seed
        if g(lo) < 0:
            raise NoRootError(f"lower branch root below {LOWER_FLOOR} at i={i}")

    z = find_root(g, lo, hi, dg, guess)
    x = k * (1.0 + z)
    res = level_residual(k, s_ref, i_ref, x, i)
    if abs(res) > RESIDUAL_TOL * (1.0 + abs(k * math.log(x))):
        raise NoRootError(f"level crossing residual {res:.3e} at i={i}")
    return x
