"""
Greedy feedback, greedy trajectories and the closed-form value function W.

The greedy policy applies no control inside the yellow zone and the minimal
boundary-preserving control on its active boundary. Its cost W is computed
two ways: closed-form quadrature along the boundary (value_W) and segment-wise
trajectory synthesis (greedy_simulate).
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from loguru import logger

from .costs import CostModel, normalized_cost
from .dynamics import (
    ConstantControl,
    ControlInput,
    TerminalEvent,
    Trajectory,
    infection_level_event,
    integrate,
    level_set_event,
    susceptible_level_event,
)
from .errors import DomainError, NotDifferentiable, StepFailure, ZoneMismatch
from .params import EpidemicParams, State
from .quadrature import adaptive_simpson, gauss_kronrod, trajectory_integral
from .roots import level_crossing
from .zones import BOUNDARY_TOL, ZoneLabel, active_boundary_contains, classify, phi, phi_sbar

DEFAULT_STEP = 1e-3
DEFAULT_HORIZON = 5000.0
SIMPSON_TOL = 1e-10
GK_TOL = 1e-10


def greedy_feedback(p: EpidemicParams, x: State) -> float:
    """[(1 - gamma/(beta s))+ ^ abar] on the active boundary, 0 elsewhere."""
    if not active_boundary_contains(p, x):
        return 0.0
    return min(max(1.0 - p.green_threshold / x.s, 0.0), p.abar)


def psi_inverse(p: EpidemicParams, s: float) -> float:
    """Infection level of the yellow boundary at abscissa s >= gamma/(beta(1-abar))."""
    k = p.yellow_threshold
    return p.theta_star - s + k * math.log(s)


# =============================================================================
# Transit quantities
# =============================================================================

@dataclass
class GreedyTransit:
    """Where the greedy trajectory from x0 reaches the active boundary."""

    zone: ZoneLabel
    theta_star: float
    entry_point: State
    s1: Optional[float] = None  # exit abscissa onto i = i*
    s2: Optional[float] = None  # abscissa of the hit on psi
    i2: Optional[float] = None

    def require_s1(self) -> float:
        if self.s1 is None:
            raise ZoneMismatch(f"s1 undefined in zone {self.zone.value}")
        return self.s1

    def require_s2(self) -> float:
        if self.s2 is None:
            raise ZoneMismatch(f"s2 undefined in zone {self.zone.value}")
        return self.s2


def _check_start(p: EpidemicParams, x0: State) -> ZoneLabel:
    zone = classify(p, x0)
    if not zone.viable:
        raise ZoneMismatch(f"{x0} is {zone.value}, not in the yellow zone")
    return zone


def transit_quantities(p: EpidemicParams, x0: State) -> GreedyTransit:
    """
    s1, s2 and theta* for a start x0 in the yellow zone.

    s1 is defined on B minus G and on the boundary of G; s2 on Y minus B and
    on the boundary of B.
    """
    zone = _check_start(p, x0)
    if x0.s <= 0 or x0.i <= 0:
        raise DomainError(f"transit quantities need s0 > 0 and i0 > 0, got {x0}")
    c, k = p.green_threshold, p.yellow_threshold
    out = GreedyTransit(zone=zone, theta_star=p.theta_star, entry_point=State(k, p.istar))

    on_green_edge = zone == ZoneLabel.GREEN and x0.s >= phi(p, x0.i) - BOUNDARY_TOL
    if zone == ZoneLabel.BAND_MINUS_GREEN or on_green_edge:
        out.s1 = level_crossing(c, x0.s, x0.i, p.istar, upper=True)

    on_band_edge = (zone == ZoneLabel.BAND_MINUS_GREEN
                    and x0.s >= phi_sbar(p, k, x0.i) - BOUNDARY_TOL)
    if zone == ZoneLabel.YELLOW_MINUS_BAND or on_band_edge:
        h0 = x0.s + x0.i - c * math.log(x0.s)
        out.s2 = math.exp(p.transit_rate * (h0 - p.theta_star))
        out.i2 = psi_inverse(p, out.s2)
    return out


@dataclass
class TransitJacobians:
    ds_ds0: float
    ds_di0: float
    quantity: str  # "s1" or "s2"


def transit_jacobians(p: EpidemicParams, x0: State) -> TransitJacobians:
    """Partial derivatives of s1 (on B minus G) or s2 (on Y minus B) w.r.t. (s0, i0)."""
    tq = transit_quantities(p, x0)
    b, g = p.beta, p.gamma
    if tq.zone == ZoneLabel.BAND_MINUS_GREEN and tq.s1 is not None:
        s1 = tq.s1
        if s1 - p.green_threshold <= BOUNDARY_TOL:
            raise ZoneMismatch(f"{x0} is on the green boundary")
        return TransitJacobians(
            ds_ds0=((b * x0.s - g) * s1) / ((b * s1 - g) * x0.s),
            ds_di0=b * s1 / (b * s1 - g),
            quantity="s1",
        )
    if tq.zone == ZoneLabel.YELLOW_MINUS_BAND:
        s2, rate = tq.s2, p.transit_rate
        return TransitJacobians(
            ds_ds0=rate * (1.0 - g / (b * x0.s)) * s2,
            ds_di0=rate * s2,
            quantity="s2",
        )
    raise ZoneMismatch(f"no transit Jacobian in zone {tq.zone.value}")


def transit_normalized_cost(c: CostModel, p: EpidemicParams, x0: State) -> float:
    """l1~ at the point where the greedy control first acts."""
    tq = transit_quantities(p, x0)
    if tq.zone == ZoneLabel.YELLOW_MINUS_BAND:
        return normalized_cost(c, p, tq.s2, tq.i2, p.abar)
    if tq.s1 is None:
        raise ZoneMismatch(f"{x0} is inside the green zone")
    return normalized_cost(c, p, tq.s1, p.istar, 1.0 - p.green_threshold / tq.s1)


# =============================================================================
# Closed-form value
# =============================================================================

def _slide_value(p: EpidemicParams, c: CostModel, s_end: float) -> float:
    """(1/(gamma i*)) int_{gamma/beta}^{s_end} l1(r, i*, 1 - gamma/(beta r)) dr."""
    g = p.green_threshold
    if s_end <= g:
        return 0.0

    def integrand(r: float) -> float:
        return c(r, p.istar, max(0.0, 1.0 - g / r))

    return gauss_kronrod(integrand, g, s_end, GK_TOL) / (p.gamma * p.istar)


def value_W(p: EpidemicParams, c: CostModel, x0: State) -> float:
    """
    Cost of the greedy policy from x0 (zero on the green zone).

    Raises:
        ZoneMismatch: x0 outside the yellow zone
    """
    zone = _check_start(p, x0)
    if zone == ZoneLabel.GREEN:
        return 0.0
    tq = transit_quantities(p, x0)
    if zone == ZoneLabel.BAND_MINUS_GREEN:
        return _slide_value(p, c, tq.s1)

    k = p.yellow_threshold

    def integrand(s: float) -> float:
        i = psi_inverse(p, s)
        return c(s, i, p.abar) / (s * i)

    curve = gauss_kronrod(integrand, k, tq.s2, GK_TOL) / (p.beta * (1.0 - p.abar))
    return curve + _slide_value(p, c, k)


def is_differentiable(p: EpidemicParams, x: State) -> bool:
    """False on the green and band boundaries and at the two corners of the segment."""
    if not classify(p, x).viable or x.i <= 0:
        return False
    k = p.yellow_threshold
    if abs(x.i - p.istar) <= BOUNDARY_TOL and (
        abs(x.s - p.green_threshold) <= BOUNDARY_TOL or abs(x.s - k) <= BOUNDARY_TOL
    ):
        return False
    if abs(x.s - phi(p, x.i)) <= BOUNDARY_TOL:
        return False
    return abs(x.s - phi_sbar(p, k, x.i)) > BOUNDARY_TOL


def value_gradient(p: EpidemicParams, c: CostModel, x0: State) -> tuple[float, float]:
    """(dW/ds, dW/di) at a differentiability point."""
    if not is_differentiable(p, x0):
        raise NotDifferentiable(f"W is not differentiable at {x0}")
    if classify(p, x0) == ZoneLabel.GREEN:
        return 0.0, 0.0
    lead = transit_normalized_cost(c, p, x0)
    bs = p.beta * x0.s
    return lead * (bs - p.gamma) / bs, lead


@dataclass
class HJResidual:
    max_residual: float
    argmax_a: float
    a_grid: np.ndarray
    residuals: np.ndarray


def hj_residual(p: EpidemicParams, c: CostModel, x0: State, n: int = 64) -> HJResidual:
    """
    Max over a in {0, abar/n, ..., abar} of

        R(a) = -l1(x0, a) 1[s0 >= phi(i0)] + dW/ds beta(1-a) s0 i0 - dW/di (beta(1-a) s0 - gamma) i0

    The argmax is the smallest a within 1e-12 of the maximum.
    """
    dws, dwi = value_gradient(p, c, x0)
    s0, i0 = x0.s, x0.i
    a_grid = np.linspace(0.0, p.abar, n + 1)
    outside_green = 1.0 if s0 >= phi(p, i0) else 0.0
    contact = p.beta * (1.0 - a_grid) * s0
    cost = np.broadcast_to(np.asarray(c(s0, i0, a_grid), float), a_grid.shape)
    residuals = -cost * outside_green + dws * contact * i0 - dwi * (contact - p.gamma) * i0
    top = float(residuals.max())
    first = int(np.flatnonzero(residuals >= top - 1e-12 * (1.0 + abs(top)))[0])
    return HJResidual(top, float(a_grid[first]), a_grid, residuals)


# =============================================================================
# Greedy trajectory synthesis
# =============================================================================

@dataclass
class _Segment:
    kind: str  # "flight", "slide"
    trajectory: Trajectory
    s_start: float = 0.0
    t_start: float = 0.0
    duration: float = 0.0


def _slide(p: EpidemicParams, s_start: float, t_start: float, duration: float,
           step: float, entry_control: float) -> _Segment:
    """Closed-form slide on i = i*: s(t) = s_start - gamma i* t."""
    n = max(1, int(math.ceil(duration / step - 1e-9)))
    tau = np.linspace(0.0, duration, n + 1)
    s = s_start - p.gamma * p.istar * tau
    a = np.clip(1.0 - p.green_threshold / s, 0.0, p.abar)
    a_left = a.copy()
    a_left[0] = entry_control
    tr = Trajectory(t_start + tau, s, np.full_like(s, p.istar), a, a_left,
                    TerminalEvent.HIT_GREEN, "green", "greedy")
    return _Segment("slide", tr, s_start, t_start, duration)


def _flight(p: EpidemicParams, x: State, t_start: float, a: float, horizon: float,
            step: float, events) -> _Segment:
    remaining = horizon - t_start
    tr = integrate(p, x, ConstantControl(a), remaining, step, events)
    if tr.terminal_event == TerminalEvent.STEP_FAILURE:
        raise StepFailure(f"greedy flight from {x} left the simplex")
    return _Segment("flight", tr.shifted(t_start))


def _greedy_segments(p: EpidemicParams, x0: State, horizon: float, step: float,
                     continue_in_green: bool) -> tuple[list[_Segment], Optional[float]]:
    zone = _check_start(p, x0)
    c, k, istar = p.green_threshold, p.yellow_threshold, p.istar
    segments: list[_Segment] = []
    t, x = 0.0, x0
    tau_green: Optional[float] = None

    if zone == ZoneLabel.YELLOW_MINUS_BAND:
        hit_psi = level_set_event(k, p.theta_star, direction=1, name="psi")
        if x.s + x.i - k * math.log(x.s) < p.theta_star - 1e-12:
            seg = _flight(p, x, t, 0.0, horizon, step,
                          [hit_psi, infection_level_event(istar, name="i*")])
            segments.append(seg)
            t, x = float(seg.trajectory.t[-1]), seg.trajectory.endpoint
            if seg.trajectory.terminal_event == TerminalEvent.HORIZON_REACHED:
                return segments, None
        seg = _flight(p, x, t, p.abar, horizon, step,
                      [susceptible_level_event(k, direction=-1, name="s=k")])
        segments.append(seg)
        t = float(seg.trajectory.t[-1])
        if seg.trajectory.terminal_event == TerminalEvent.HORIZON_REACHED:
            return segments, None
        x = State(k, istar)
        zone = ZoneLabel.BAND_MINUS_GREEN

    if zone == ZoneLabel.BAND_MINUS_GREEN:
        if x.i < istar - 1e-12:
            seg = _flight(p, x, t, 0.0, horizon, step, [infection_level_event(istar, name="i*")])
            segments.append(seg)
            t, x = float(seg.trajectory.t[-1]), seg.trajectory.endpoint
            if seg.trajectory.terminal_event == TerminalEvent.HORIZON_REACHED:
                return segments, None
        s_start = max(x.s, c)
        duration = min((s_start - c) / (p.gamma * istar), horizon - t)
        entry = float(segments[-1].trajectory.a_left[-1]) if segments else 0.0
        if duration > 0:
            seg = _slide(p, s_start, t, duration, step, entry)
            segments.append(seg)
            t += duration
            x = State(float(seg.trajectory.s[-1]), istar)
        if t >= horizon - 1e-12 and x.s > c + 1e-12:
            segments[-1].trajectory.terminal_event = TerminalEvent.HORIZON_REACHED
            return segments, None
        x = State(c, istar)

    tau_green = t
    if continue_in_green and horizon - t > 1e-12:
        segments.append(_flight(p, x, t, 0.0, horizon, step, []))
    return segments, tau_green


def _assemble(segments: list[_Segment], x0: State) -> Trajectory:
    if not segments:
        tr = Trajectory.single(0.0, x0, 0.0, TerminalEvent.HIT_GREEN)
        tr.policy = "greedy"
        return tr
    tr = segments[0].trajectory
    for seg in segments[1:]:
        tr = tr.concat(seg.trajectory)
    tr.policy = "greedy"
    return tr


def greedy_trajectory(p: EpidemicParams, x0: State, horizon: float = DEFAULT_HORIZON,
                      step: float = DEFAULT_STEP, continue_in_green: bool = False) -> Trajectory:
    """Greedy path from x0; stops on entering G unless continue_in_green."""
    segments, _ = _greedy_segments(p, x0, horizon, step, continue_in_green)
    return _assemble(segments, x0)


@dataclass
class GreedyResult:
    trajectory: Trajectory
    cost: float
    tau_green: Optional[float]  # None if the horizon came first
    segments: list[str] = field(default_factory=list)


def _segments_cost(p: EpidemicParams, c: CostModel, segments: list[_Segment],
                   q: float = 0.0) -> float:
    """Sum of weighted running costs; weight q e^{-qt} when q > 0, else 1."""

    def weight(t):
        return q * np.exp(-q * t) if q > 0 else np.ones_like(np.asarray(t, float))

    total = 0.0
    for seg in segments:
        if seg.kind == "slide":
            g, istar, s0, t0 = p.green_threshold, p.istar, seg.s_start, seg.t_start

            def f(tau: float) -> float:
                s = s0 - p.gamma * istar * tau
                a = min(max(1.0 - g / s, 0.0), p.abar)
                return float(weight(t0 + tau)) * c(s, istar, a)

            total += adaptive_simpson(f, 0.0, seg.duration, SIMPSON_TOL)
        else:
            total += trajectory_integral(
                seg.trajectory, lambda t, s, i, a: weight(t) * np.asarray(c(s, i, a))
            )
    return total


def greedy_simulate(p: EpidemicParams, x0: State, c: CostModel,
                    horizon: float = DEFAULT_HORIZON, step: float = DEFAULT_STEP) -> GreedyResult:
    """
    Synthesize the greedy trajectory and accumulate its undiscounted cost.

    Flights use RK4 with event localization; the slide on i = i* uses its
    closed form with adaptive Simpson quadrature.
    """
    segments, tau_green = _greedy_segments(p, x0, horizon, step, continue_in_green=False)
    cost = _segments_cost(p, c, segments)
    tr = _assemble(segments, x0)
    logger.debug(f"greedy from ({x0.s:.6g}, {x0.i:.6g}): cost={cost:.10g} tau={tau_green}")
    return GreedyResult(tr, cost, tau_green, [seg.kind for seg in segments])


def discounted_policy_cost(
    p: EpidemicParams,
    c: CostModel,
    x0: State,
    q: float,
    policy: Union[str, ControlInput] = "greedy",
    horizon: Optional[float] = None,
    step: float = 1e-2,
) -> float:
    """
    q int_0^H e^{-qt} l1 dt along a policy; inf if the policy breaks i <= i*.

    The greedy policy keeps running with a = 0 after entering G. H defaults to
    30/q, past which the discount weight is below 1e-13.
    """
    if q <= 0:
        raise DomainError(f"discounted cost needs q > 0, got {q}")
    horizon = horizon or 30.0 / q
    if policy == "greedy":
        segments, _ = _greedy_segments(p, x0, horizon, step, continue_in_green=True)
    else:
        tr = integrate(p, x0, policy, horizon, step)
        if tr.terminal_event == TerminalEvent.STEP_FAILURE:
            raise StepFailure(f"policy {policy.describe()} left the simplex")
        segments = [_Segment("flight", tr)]
    if max(seg.trajectory.max_infection() for seg in segments) > p.istar + 1e-9:
        return math.inf
    return _segments_cost(p, c, segments, q)
