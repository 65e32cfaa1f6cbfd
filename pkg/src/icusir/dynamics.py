"""
Controlled SIR dynamics.

    ds/dt = -beta (1 - a) s i
    di/dt = (beta (1 - a) s - gamma) i

Fixed-step RK4 with sample-and-hold controls and bisection event
localization. The removed compartment is never integrated.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
from loguru import logger

from .errors import DomainError
from .params import EpidemicParams, State

DEFAULT_STEP = 1e-3
EVENT_TOL = 1e-10
SIMPLEX_TOL = 1e-8


class TerminalEvent(str, Enum):
    """Why an integration stopped."""

    HORIZON_REACHED = "HorizonReached"
    HIT_GREEN = "HitGreen"
    HIT_BOUNDARY = "HitBoundary"
    STEP_FAILURE = "StepFailure"


# =============================================================================
# Controls
# =============================================================================

class ControlInput(ABC):
    """A measurable control policy t, (s, i) -> a."""

    @abstractmethod
    def value(self, t: float, s: float, i: float) -> float:
        ...

    def next_switch(self, t: float) -> float:
        """Next time after t where an open-loop control jumps."""
        return math.inf

    def describe(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class ConstantControl(ControlInput):
    a: float

    def value(self, t: float, s: float, i: float) -> float:
        return self.a

    def describe(self) -> str:
        return f"constant(a={self.a:g})"


@dataclass(frozen=True)
class PiecewiseConstant(ControlInput):
    """Open-loop control; each (time, a) holds from its time to the next breakpoint."""

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.breakpoints:
            raise DomainError("piecewise-constant control needs at least one breakpoint")
        times = [b[0] for b in self.breakpoints]
        if times != sorted(times):
            raise DomainError("breakpoints must be sorted by time")

    def value(self, t: float, s: float, i: float) -> float:
        a = self.breakpoints[0][1]
        for start, level in self.breakpoints:
            if start <= t + 1e-12:
                a = level
            else:
                break
        return a

    def next_switch(self, t: float) -> float:
        for start, _ in self.breakpoints:
            if start > t + 1e-12:
                return start
        return math.inf

    def describe(self) -> str:
        pts = ", ".join(f"{t:.4g}:{a:.4g}" for t, a in self.breakpoints)
        return f"piecewise({pts})"


@dataclass(frozen=True)
class Feedback(ControlInput):
    """Closed-loop map State -> a, sampled at the start of each step."""

    fn: Callable[[State], float]
    name: str = "feedback"

    def value(self, t: float, s: float, i: float) -> float:
        return self.fn(State(s, i))

    def describe(self) -> str:
        return self.name


# =============================================================================
# Events
# =============================================================================

@dataclass(frozen=True)
class Event:
    """Stop condition: fn(t, s, i) changes sign in the given direction."""

    fn: Callable[[float, float, float], float]
    direction: int = 0  # +1 upward, -1 downward, 0 either
    label: TerminalEvent = TerminalEvent.HIT_BOUNDARY
    name: str = ""

    def crossed(self, before: float, after: float) -> bool:
        if self.direction >= 0 and before < 0.0 <= after:
            return True
        if self.direction <= 0 and before > 0.0 >= after:
            return True
        return False


def infection_level_event(level: float, direction: int = 1, name: str = "") -> Event:
    return Event(lambda t, s, i: i - level, direction, TerminalEvent.HIT_BOUNDARY,
                 name or f"i={level:g}")


def susceptible_level_event(level: float, direction: int = -1, name: str = "") -> Event:
    return Event(lambda t, s, i: s - level, direction, TerminalEvent.HIT_BOUNDARY,
                 name or f"s={level:g}")


def level_set_event(k: float, level: float, direction: int = 1, name: str = "") -> Event:
    """Crossing of H_k(s, i) = level."""
    return Event(lambda t, s, i: s + i - k * math.log(s) - level, direction,
                 TerminalEvent.HIT_BOUNDARY, name or f"H={level:g}")


# =============================================================================
# Trajectory
# =============================================================================

@dataclass
class Trajectory:
    """
    Samples of an integrated path.

    a[k] is the control held on [t_k, t_k+1); a_left[k] is the control that
    arrived at t_k. They differ only where the control jumps.
    """

    t: np.ndarray
    s: np.ndarray
    i: np.ndarray
    a: np.ndarray
    a_left: np.ndarray
    terminal_event: TerminalEvent = TerminalEvent.HORIZON_REACHED
    event_name: str = ""
    policy: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def single(cls, t: float, x: State, a: float = 0.0,
               event: TerminalEvent = TerminalEvent.HORIZON_REACHED) -> "Trajectory":
        arr = lambda v: np.array([v], dtype=float)
        return cls(arr(t), arr(x.s), arr(x.i), arr(a), arr(a), event)

    @property
    def endpoint(self) -> State:
        return State(float(self.s[-1]), float(self.i[-1]))

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def max_infection(self) -> float:
        return float(self.i.max())

    def breaks(self) -> list[int]:
        """Interior sample indices where the control jumps."""
        jumps = np.flatnonzero(self.a_left[1:-1] != self.a[1:-1]) + 1
        return jumps.tolist()

    def pieces(self) -> Iterator[tuple[int, int]]:
        """Index ranges [start, stop] on which the control is continuous."""
        cuts = [0] + self.breaks() + [len(self.t) - 1]
        for start, stop in zip(cuts[:-1], cuts[1:]):
            if stop > start:
                yield start, stop

    def concat(self, other: "Trajectory") -> "Trajectory":
        """Append a trajectory whose first sample repeats this one's last."""
        if len(other) == 0:
            return self
        a_left = np.concatenate([self.a_left, other.a_left[1:]])
        a = np.concatenate([self.a[:-1], other.a])
        # control arriving at the junction comes from this trajectory
        a_left[len(self.t) - 1] = self.a_left[-1]
        return Trajectory(
            t=np.concatenate([self.t, other.t[1:]]),
            s=np.concatenate([self.s, other.s[1:]]),
            i=np.concatenate([self.i, other.i[1:]]),
            a=a,
            a_left=a_left,
            terminal_event=other.terminal_event,
            event_name=other.event_name,
            policy=self.policy or other.policy,
        )

    def shifted(self, dt: float) -> "Trajectory":
        return Trajectory(self.t + dt, self.s, self.i, self.a, self.a_left,
                          self.terminal_event, self.event_name, self.policy, dict(self.meta))


# =============================================================================
# Vector field and integration
# =============================================================================

def vector_field(p: EpidemicParams, x: State, a: float) -> tuple[float, float]:
    """Returns (ds/dt, di/dt) at x under control a."""
    p.check_control(a)
    flux = p.beta * (1.0 - a) * x.s * x.i
    return -flux, flux - p.gamma * x.i


def constant_control_invariant(p: EpidemicParams, a: float, x: State) -> float:
    """H_a(s, i) = s + i - gamma/(beta(1-a)) log s, conserved under constant a."""
    p.check_control(a)
    if x.s <= 0:
        raise DomainError(f"H_a needs s > 0, got s={x.s}")
    return x.s + x.i - p.peak_threshold(a) * math.log(x.s)


def integrate(
    p: EpidemicParams,
    x0: State,
    u: ControlInput,
    horizon: float,
    step: float = DEFAULT_STEP,
    events: Sequence[Event] = (),
    reverse: bool = False,
    check_simplex: bool = True,
) -> Trajectory:
    """
    Integrate the controlled SIR system with classical RK4.

    Args:
        p: model parameters
        x0: initial state
        u: control policy, sampled at the start of each step
        horizon: final time (> 0)
        step: fixed step (> 0); shortened to land on control switches and the horizon
        events: stop conditions localized by bisection to 1e-10 in time
        reverse: integrate the negated field (backward time)
        check_simplex: stop with StepFailure if the state leaves the triangle

    Returns:
        Trajectory with strictly increasing sample times.
    """
    if step <= 0 or horizon <= 0:
        raise DomainError(f"step and horizon must be positive (step={step}, horizon={horizon})")
    if not x0.in_simplex(SIMPLEX_TOL):
        raise DomainError(f"initial state {x0} outside the simplex")

    beta, gamma, abar = p.beta, p.gamma, p.abar
    sign = -1.0 if reverse else 1.0

    def rk4(s: float, i: float, a: float, h: float) -> tuple[float, float]:
        c = beta * (1.0 - a)
        hs = sign * h
        k1s = -c * s * i
        k1i = (c * s - gamma) * i
        s2, i2 = s + 0.5 * hs * k1s, i + 0.5 * hs * k1i
        k2s = -c * s2 * i2
        k2i = (c * s2 - gamma) * i2
        s3, i3 = s + 0.5 * hs * k2s, i + 0.5 * hs * k2i
        k3s = -c * s3 * i3
        k3i = (c * s3 - gamma) * i3
        s4, i4 = s + hs * k3s, i + hs * k3i
        k4s = -c * s4 * i4
        k4i = (c * s4 - gamma) * i4
        return (s + hs * (k1s + 2 * k2s + 2 * k3s + k4s) / 6.0,
                i + hs * (k1i + 2 * k2i + 2 * k3i + k4i) / 6.0)

    t, s, i = 0.0, x0.s, x0.i
    ts, ss, is_, held, arrived = [t], [s], [i], [], []
    gvals = [ev.fn(t, s, i) for ev in events]
    terminal, event_name = TerminalEvent.HORIZON_REACHED, ""

    while horizon - t > 1e-12 * max(1.0, horizon):
        a = u.value(t, s, i)
        if not -1e-15 <= a <= abar + 1e-15:
            raise DomainError(f"control {a} outside [0, {abar}] at t={t}")
        a = min(max(a, 0.0), abar)

        h = min(step, horizon - t)
        switch = u.next_switch(t)
        if switch - t > 1e-12:
            h = min(h, switch - t)
        s_new, i_new = rk4(s, i, a, h)

        hit: Optional[tuple[float, int]] = None
        for k, ev in enumerate(events):
            g_new = ev.fn(t + h, s_new, i_new)
            if not ev.crossed(gvals[k], g_new):
                gvals[k] = g_new
                continue
            lo, hi = 0.0, h
            while hi - lo > EVENT_TOL:
                mid = 0.5 * (lo + hi)
                sm, im = rk4(s, i, a, mid)
                if ev.crossed(gvals[k], ev.fn(t + mid, sm, im)):
                    hi = mid
                else:
                    lo = mid
            if hit is None or hi < hit[0]:
                hit = (hi, k)
        if hit is not None:
            h = hit[0]
            s_new, i_new = rk4(s, i, a, h)
            terminal, event_name = events[hit[1]].label, events[hit[1]].name

        if check_simplex and not State(s_new, i_new).in_simplex(SIMPLEX_TOL):
            logger.warning(f"⚠️ state ({s_new:.3e}, {i_new:.3e}) left the simplex at t={t + h:.6g}")
            terminal, event_name = TerminalEvent.STEP_FAILURE, "simplex"
            break

        t = horizon if h == horizon - t else t + h
        s, i = s_new, i_new
        ts.append(t)
        ss.append(s)
        is_.append(i)
        held.append(a)
        arrived.append(a)
        if hit is not None:
            break

    if held:
        held.append(held[-1])
        arrived.insert(0, held[0])
    else:
        held = [u.value(t, s, i)]
        arrived = list(held)

    return Trajectory(
        t=np.asarray(ts), s=np.asarray(ss), i=np.asarray(is_),
        a=np.asarray(held), a_left=np.asarray(arrived),
        terminal_event=terminal, event_name=event_name, policy=u.describe(),
    )
