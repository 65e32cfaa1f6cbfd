"""
Running costs l1(s, i, a) and their sampled assumption checks.

Cost models evaluate on numpy-broadcastable inputs so that checkers and the
LP layer can sample them on whole grids at once.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from loguru import logger
from scipy.interpolate import RegularGridInterpolator

from .errors import DomainError
from .params import EpidemicParams, State
from .zones import ZoneLabel, classify, phi, psi

CHECK_TOL = 1e-12


def _scalar_or_array(x):
    arr = np.asarray(x, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


class CostModel(ABC):
    """Running cost rate l1(s, i, a) >= lower_bound."""

    name: str = "cost"
    lower_bound: float = 0.0
    continuous: bool = True  # asserted by the user, never sampled
    control_independent: bool = False

    @abstractmethod
    def evaluate(self, s, i, a):
        ...

    def __call__(self, s, i, a=0.0):
        s, i, a = np.broadcast_arrays(np.asarray(s, float), np.asarray(i, float), np.asarray(a, float))
        return _scalar_or_array(self.evaluate(s, i, a))

    def describe(self) -> dict:
        return {"kind": self.name, "control_independent": self.control_independent}


class ZeroCost(CostModel):
    name = "zero"
    control_independent = True

    def evaluate(self, s, i, a):
        return np.zeros_like(s)


class ConstantCost(CostModel):
    name = "constant"
    control_independent = True

    def __init__(self, value: float):
        if value < 0:
            raise DomainError(f"constant cost must be non-negative, got {value}")
        self.value = value
        self.lower_bound = value

    def evaluate(self, s, i, a):
        return np.full_like(s, self.value)

    def describe(self) -> dict:
        return {**super().describe(), "value": self.value}


class StateProductCost(CostModel):
    """Control-independent l1 = lam * s^s_power * i^i_power."""

    name = "state_product"
    control_independent = True

    def __init__(self, lam: float = 1.0, s_power: int = 1, i_power: int = 1):
        self.lam, self.s_power, self.i_power = lam, s_power, i_power

    def evaluate(self, s, i, a):
        return self.lam * s ** self.s_power * i ** self.i_power

    def describe(self) -> dict:
        return {**super().describe(), "lambda": self.lam, "s_power": self.s_power,
                "i_power": self.i_power}


class MultiplicativeCost(CostModel):
    """l1 = lambda(s, i) * a."""

    name = "multiplicative"

    def __init__(self, multiplier: Callable, label: str = "custom"):
        self._multiplier = multiplier
        self.label = label

    def multiplier(self, s, i):
        s, i = np.broadcast_arrays(np.asarray(s, float), np.asarray(i, float))
        return _scalar_or_array(self._multiplier(s, i))

    def evaluate(self, s, i, a):
        return self._multiplier(s, i) * a

    @classmethod
    def si(cls, lam: float = 1.0) -> "MultiplicativeCost":
        """lambda(s, i) = lam * s * i."""
        return cls(lambda s, i: lam * s * i, label=f"{lam:g}*s*i")

    def describe(self) -> dict:
        return {**super().describe(), "multiplier": self.label}


class AffineCost(MultiplicativeCost):
    name = "affine"

    def __init__(self, lam: float = 1.0):
        self.lam = lam
        super().__init__(lambda s, i: np.full_like(np.asarray(s, float), lam), label=f"{lam:g}")


class PowerCost(MultiplicativeCost):
    """l1 = lam * i^eta * a with eta in [0, 1]."""

    name = "multiplicative_power"

    def __init__(self, lam: float = 1.0, eta: float = 1.0):
        if not 0.0 <= eta <= 1.0:
            raise DomainError(f"eta must lie in [0, 1], got {eta}")
        self.lam, self.eta = lam, eta
        super().__init__(lambda s, i: lam * np.power(i, eta) * np.ones_like(s),
                         label=f"{lam:g}*i^{eta:g}")


class TableCost(CostModel):
    """Tabulated l1 on a rectilinear (s, i, a) grid."""

    name = "table"

    def __init__(self, s_axis, i_axis, a_axis, values, method: str = "linear"):
        if method not in ("linear", "nearest"):
            raise DomainError(f"table interpolation must be linear or nearest, got {method}")
        values = np.asarray(values, float)
        self.lower_bound = max(0.0, float(values.min()))
        self.continuous = method == "linear"
        self.method = method
        self._interp = RegularGridInterpolator(
            (np.asarray(s_axis, float), np.asarray(i_axis, float), np.asarray(a_axis, float)),
            values, method=method, bounds_error=False, fill_value=None,
        )

    def evaluate(self, s, i, a):
        pts = np.stack([s.ravel(), i.ravel(), a.ravel()], axis=-1)
        return self._interp(pts).reshape(s.shape)

    @classmethod
    def from_csv(cls, path: Path, method: str = "linear") -> "TableCost":
        """Load a full grid from CSV with header s,i,a,l1."""
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 4:
            raise DomainError(f"{path}: expected columns s,i,a,l1")
        axes = [np.unique(data[:, k]) for k in range(3)]
        shape = tuple(len(ax) for ax in axes)
        if int(np.prod(shape)) != len(data):
            raise DomainError(f"{path}: rows do not form a full s x i x a grid {shape}")
        order = np.lexsort((data[:, 2], data[:, 1], data[:, 0]))
        values = data[order, 3].reshape(shape)
        logger.info(f"Loaded table cost {path} on grid {shape} ({method})")
        return cls(*axes, values, method=method)

    def describe(self) -> dict:
        return {**super().describe(), "method": self.method}


def normalized_cost(c: CostModel, p: EpidemicParams, s, i, a):
    """l1 / (gamma i a), defined for i > 0 and a > 0."""
    i_arr, a_arr = np.asarray(i, float), np.asarray(a, float)
    if np.any(i_arr <= 0) or np.any(a_arr <= 0):
        raise DomainError("normalized cost needs i > 0 and a > 0")
    return _scalar_or_array(np.asarray(c(s, i, a)) / (p.gamma * i_arr * a_arr))


# =============================================================================
# Sampled checks
# =============================================================================

@dataclass
class SamplingGrid:
    ns: int = 200
    ni: int = 200
    na: int = 21
    i_min: float = 1e-6


@dataclass
class CheckResult:
    name: str
    description: str
    checked: int = 0
    violations: int = 0
    worst: float = 0.0  # most negative margin seen
    worst_point: Optional[tuple[float, ...]] = None

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "checked": self.checked,
            "violations": self.violations,
            "worst_margin": self.worst,
            "worst_point": list(self.worst_point) if self.worst_point else None,
            "passed": self.passed,
        }


@dataclass
class AssumptionReport:
    """Sampled, non-exhaustive verdicts on a cost model."""

    cost: dict
    checks: dict[str, CheckResult] = field(default_factory=dict)
    exhaustive: bool = False

    @property
    def passed(self) -> bool:
        return all(ch.passed for ch in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "cost": self.cost,
            "exhaustive": self.exhaustive,
            "passed": self.passed,
            "checks": {name: ch.to_dict() for name, ch in self.checks.items()},
        }


def _summarize(name: str, description: str, margin: np.ndarray, checked: np.ndarray,
               coords: tuple[np.ndarray, ...], tol: float = CHECK_TOL) -> CheckResult:
    """Margins below -tol on checked samples count as violations."""
    margin = np.where(checked, margin, np.inf)
    result = CheckResult(name, description, checked=int(checked.sum()))
    if result.checked == 0:
        return result
    result.violations = int((margin < -tol).sum())
    idx = np.unravel_index(int(np.argmin(margin)), margin.shape)
    result.worst = float(min(0.0, margin[idx]))
    if result.violations:
        result.worst_point = tuple(float(np.broadcast_to(c, margin.shape)[idx]) for c in coords)
    return result


def check_assumptions(c: CostModel, p: EpidemicParams,
                      grid: Optional[SamplingGrid] = None) -> AssumptionReport:
    """
    Sample the standing assumptions on a cost over the yellow zone x [0, abar].

    Returns:
        AssumptionReport with one CheckResult per property.
    """
    grid = grid or SamplingGrid()
    s_axis = np.linspace(grid.i_min, psi(p, 0.0), grid.ns)
    i_axis = np.linspace(grid.i_min, p.istar, grid.ni)
    a_axis = np.linspace(0.0, p.abar, grid.na)
    phi_i = np.array([phi(p, float(i)) for i in i_axis])
    psi_i = np.array([psi(p, float(i)) for i in i_axis])

    S, I = np.meshgrid(s_axis, i_axis, indexing="ij")
    yellow = (S <= psi_i[None, :]) & (S + I <= 1.0)
    green = S <= phi_i[None, :]
    S3, I3, A3 = S[..., None], I[..., None], a_axis[None, None, :]
    L = np.broadcast_to(np.asarray(c(S3, I3, A3)), S.shape + (grid.na,))
    Y3 = np.broadcast_to(yellow[..., None], L.shape)
    coords3 = (S3, I3, A3)

    report = AssumptionReport(cost=c.describe())
    checks = report.checks

    checks["nonnegative"] = _summarize(
        "nonnegative", "l1 >= lower_bound >= 0 on Y x [0, abar]",
        L - max(c.lower_bound, 0.0), Y3, coords3)
    if c.lower_bound < 0:
        checks["nonnegative"].violations += 1

    D = np.diff(L, axis=-1)
    checks["monotone_in_a"] = _summarize(
        "monotone_in_a", "a -> l1(s, i, a) non-decreasing",
        D.min(axis=-1), yellow, (S, I))

    # interval image: convex in a, or at least free of jumps
    if grid.na >= 3:
        convex = np.diff(L, n=2, axis=-1).min(axis=-1) >= -1e-9
        absD = np.abs(D)
        left = np.concatenate([np.zeros_like(absD[..., :1]), absD[..., :-1]], axis=-1)
        right = np.concatenate([absD[..., 1:], np.zeros_like(absD[..., :1])], axis=-1)
        jumps = (absD > 10.0 * (left + right) + 1e-9).any(axis=-1)
        margin = np.where(~convex & jumps, -1.0, 0.0)
    else:
        margin = np.zeros(S.shape)
    checks["interval_image"] = _summarize(
        "interval_image", "{l1(s, i, a): a} is an interval (convex or jump-free in a)",
        margin, yellow, (S, I))

    checks["zero_at_rest_on_green"] = _summarize(
        "zero_at_rest_on_green", "l1(s, i, 0) = 0 on G",
        -np.abs(L[..., 0]), yellow & green, (S, I))
    checks["zero_on_green"] = _summarize(
        "zero_on_green", "l1(s, i, a) = 0 on G for all a",
        -np.abs(L).max(axis=-1), yellow & green, (S, I))

    s_off = s_axis[(s_axis > phi(p, 0.0) + CHECK_TOL) & (s_axis <= psi(p, 0.0))]
    l_zero = np.asarray(c(s_off, 0.0, 0.0), float)
    checks["positive_off_green_at_zero_infection"] = _summarize(
        "positive_off_green_at_zero_infection", "l1(s, 0, 0) > 0 for (s, 0) outside G",
        np.where(l_zero > 0, 0.0, -1.0), np.ones_like(s_off, bool), (s_off, np.zeros_like(s_off)))

    if isinstance(c, MultiplicativeCost):
        lam = np.broadcast_to(np.asarray(c.multiplier(S, I)), S.shape)
        mono_s = np.diff(lam, axis=0)
        both = yellow[1:, :] & yellow[:-1, :]
        checks["multiplier_monotone_in_s"] = _summarize(
            "multiplier_monotone_in_s", "lambda(s, i) non-decreasing in s",
            mono_s, both, (S[1:, :], I[1:, :]))
        ratio = lam / I
        drop_i = -np.diff(ratio, axis=1)
        both = yellow[:, 1:] & yellow[:, :-1]
        checks["multiplier_ratio_nonincreasing_in_i"] = _summarize(
            "multiplier_ratio_nonincreasing_in_i", "lambda(s, i)/i non-increasing in i",
            drop_i, both, (S[:, 1:], I[:, 1:]))

    failed = [name for name, ch in checks.items() if not ch.passed]
    logger.info(f"Cost {c.name}: {len(checks) - len(failed)}/{len(checks)} sampled checks pass"
                + (f" (failing: {', '.join(failed)})" if failed else ""))
    return report


def check_subhomogeneity(c: MultiplicativeCost, p: EpidemicParams,
                         alphas=(1.0, 1.5, 2.0, 4.0), n: int = 50) -> CheckResult:
    """lambda(s, alpha i) <= alpha lambda(s, i) for alpha >= 1 with alpha i <= i*."""
    s_axis = np.linspace(1e-3, psi(p, 0.0), n)
    i_axis = np.linspace(1e-6, p.istar, n)
    S, I, Al = np.meshgrid(s_axis, i_axis, np.asarray(alphas, float), indexing="ij")
    inside = Al * I <= p.istar
    margin = Al * np.asarray(c.multiplier(S, I)) - np.asarray(c.multiplier(S, Al * I))
    return _summarize("subhomogeneity", "lambda(s, alpha i) <= alpha lambda(s, i)",
                      margin, inside, (S, I, Al), tol=1e-12)


# =============================================================================
# Greedy-optimality condition
# =============================================================================

@dataclass
class GenCondGrid:
    ns: int = 60
    ni: int = 60
    na: int = 16
    i_min: float = 1e-6


@dataclass
class GenCondReport:
    checked: int = 0
    violations: int = 0
    worst_margin: float = float("inf")
    worst_point: Optional[tuple[float, float]] = None
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "checked": self.checked,
            "violations": self.violations,
            "worst_margin": self.worst_margin if self.checked else None,
            "worst_point": list(self.worst_point) if self.worst_point else None,
            "skipped": self.skipped,
            "passed": self.passed,
        }


def gencond_margin(c: CostModel, p: EpidemicParams, x0: State, a_grid: np.ndarray) -> float:
    """
    min_a l1~(x0, a) minus l1~ at the greedy transit point.

    Non-negative margins mean the greedy policy is optimal at x0.
    """
    from .policy import transit_normalized_cost

    here = np.min(np.asarray(normalized_cost(c, p, x0.s, x0.i, a_grid)))
    return float(here - transit_normalized_cost(c, p, x0))


def check_gencond(c: CostModel, p: EpidemicParams,
                  grid: Optional[GenCondGrid] = None) -> GenCondReport:
    """Evaluate the greedy-optimality inequalities over B minus G and Y minus B."""
    grid = grid or GenCondGrid()
    a_grid = np.linspace(p.abar / grid.na, p.abar, grid.na)
    s_axis = np.linspace(p.green_threshold, psi(p, 0.0), grid.ns)
    i_axis = np.linspace(grid.i_min, p.istar, grid.ni)
    report = GenCondReport()

    for s in s_axis:
        for i in i_axis:
            x0 = State(float(s), float(i))
            zone = classify(p, x0)
            if zone not in (ZoneLabel.BAND_MINUS_GREEN, ZoneLabel.YELLOW_MINUS_BAND):
                continue
            try:
                margin = gencond_margin(c, p, x0, a_grid)
            except DomainError:
                # transit control vanishes at the green corner
                report.skipped += 1
                continue
            report.checked += 1
            if margin < report.worst_margin:
                report.worst_margin = margin
                report.worst_point = (x0.s, x0.i)
            if margin < -1e-9:
                report.violations += 1

    logger.info(f"GenCond on {report.checked} points: {report.violations} violations, "
                f"worst margin {report.worst_margin:.3e}")
    return report
