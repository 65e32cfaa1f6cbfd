"""
Two-stage dual dynamic programming on occupation measures.

The backward step fits a polynomial subsolution p of the discounted HJ
inequality on a sampled box and keeps it as a cut; the pointwise maximum of
q p over the cut set lower-bounds the value. The forward step evaluates
simulated trajectories (their occupation moments give feasible measure
pairs) against the cuts and picks the scenario whose endpoint receives the
next cut.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from .costs import CostModel
from .dynamics import ConstantControl, PiecewiseConstant, TerminalEvent, Trajectory, integrate
from .errors import DomainError, EmptyCutSet, NoFeasibleScenario, StepFailure, ValidationFailure
from .moments import MomentVector, dirac_terminal_moments, trajectory_to_moments
from .params import EpidemicParams, State
from .policy import discounted_policy_cost, greedy_trajectory
from .polynomials import Polynomial, basis_matrix, monomial_exponents
from .quadrature import trajectory_integral
from .reachable import ReachableSpec, membership, reachable_spec
from .simplex import LPStatus, maximize_over_inequalities
from .zones import classify

AUDIT_LIMIT = 1e-4
FEASIBLE_TOL = 1e-9


# =============================================================================
# Sampling box and grids
# =============================================================================

@dataclass(frozen=True)
class Box:
    """[0, s_max] x [0, i_max] x [0, a_max]."""

    s_max: float
    i_max: float
    a_max: float

    @classmethod
    def default(cls, p: EpidemicParams, s0: Optional[float] = None) -> "Box":
        return cls(max(p.yellow_threshold, s0 or 0.0), p.istar, p.abar)

    def contains(self, x: State, tol: float = 1e-12) -> bool:
        return -tol <= x.s <= self.s_max + tol and -tol <= x.i <= self.i_max + tol


@dataclass
class PositivityGrid:
    n_s: int = 33
    n_i: int = 33
    n_a: int = 9
    refine: int = 4  # audit grid is refine times finer
    generation_rounds: int = 4
    generation_batch: int = 64
    violation_tol: float = 1e-7
    coef_bound: float = 1e4

    def __post_init__(self):
        if min(self.n_s, self.n_i) < 2 or self.n_a < 2 or self.refine < 1:
            raise DomainError("positivity grid needs at least 2 nodes per axis")

    def nodes(self, box: Box, factor: int = 1):
        s = np.linspace(0.0, box.s_max, (self.n_s - 1) * factor + 1)
        i = np.linspace(0.0, box.i_max, (self.n_i - 1) * factor + 1)
        a = np.linspace(0.0, box.a_max, (self.n_a - 1) * factor + 1)
        return s, i, a


# =============================================================================
# Cuts
# =============================================================================

@dataclass
class Cut:
    poly: Polynomial
    value: float  # objective of the backward LP
    worst_positivity_margin: float  # largest sampled violation on the audit grid
    rounds: int = 0

    @property
    def audited(self) -> bool:
        return self.worst_positivity_margin <= AUDIT_LIMIT


@dataclass
class CutSet:
    r: int
    q: float
    box: Box
    cuts: list[Polynomial] = field(default_factory=list)
    history: list[float] = field(default_factory=list)
    margins: list[float] = field(default_factory=list)

    def add(self, cut: Cut):
        self.cuts.append(cut.poly)
        self.history.append(cut.value)
        self.margins.append(cut.worst_positivity_margin)

    def __len__(self) -> int:
        return len(self.cuts)

    def to_dict(self) -> dict:
        return {"r": self.r, "q": self.q, "cuts": [c.to_dict() for c in self.cuts],
                "history": self.history, "margins": self.margins}


# =============================================================================
# Scenarios
# =============================================================================

@dataclass
class Scenario:
    """A terminal measure gamma2 (finite support) with its generating trajectory data."""

    support: list[tuple[State, float]]
    policy: str = "dirac"
    moments: Optional[MomentVector] = None
    stage_cost: float = 0.0  # q int_0^T e^{-qt} l1 dt
    trajectory: Optional[Trajectory] = field(default=None, repr=False)
    continuation: Optional[float] = None  # feasible cost-to-go from the endpoint

    def __post_init__(self):
        weights = [w for _, w in self.support]
        if not weights or min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-12:
            raise DomainError("scenario weights must be nonnegative and sum to 1")

    @classmethod
    def dirac(cls, x: State, policy: str = "dirac") -> "Scenario":
        return cls([(x, 1.0)], policy)

    @property
    def endpoint(self) -> State:
        """Support point with the largest weight."""
        return max(self.support, key=lambda sw: sw[1])[0]

    def terminal_moments(self, r: int) -> dict:
        return dirac_terminal_moments(self.support, r)

    def mix(self, other: "Scenario", weight: float) -> "Scenario":
        """weight * self + (1 - weight) * other."""
        if not 0.0 <= weight <= 1.0:
            raise DomainError(f"mixing weight {weight} outside [0, 1]")
        support = [(x, weight * w) for x, w in self.support]
        support += [(x, (1.0 - weight) * w) for x, w in other.support]
        support = [(x, w) for x, w in support if w > 0]
        moments = None
        if self.moments is not None and other.moments is not None:
            moments = self.moments.combine(other.moments, weight)
        cont = None
        if self.continuation is not None and other.continuation is not None:
            cont = weight * self.continuation + (1.0 - weight) * other.continuation
        total = sum(w for _, w in support)
        return Scenario(
            [(x, w / total) for x, w in support],
            f"mix({self.policy},{other.policy})",
            moments,
            weight * self.stage_cost + (1.0 - weight) * other.stage_cost,
            None,
            cont,
        )


def lower_bound(cs: CutSet, sc: Scenario) -> float:
    """max over cuts of <q p, gamma2>; support points outside the box contribute 0."""
    if not cs.cuts:
        raise EmptyCutSet("lower bound needs at least one cut")
    pts = [(x, w) for x, w in sc.support if cs.box.contains(x)]
    if not pts:
        return 0.0
    s = np.array([x.s for x, _ in pts])
    i = np.array([x.i for x, _ in pts])
    w = np.array([w for _, w in pts])
    return max(float(cs.q * w @ np.atleast_1d(p(s, i))) for p in cs.cuts)


# =============================================================================
# Backward step
# =============================================================================

class _SubsolutionRows:
    """Sampled rows of p >= 0 and of the subsolution inequality, in coefficient space."""

    def __init__(self, p: EpidemicParams, c: CostModel, q: float, exponents: np.ndarray, box: Box):
        self.p, self.c, self.q = p, c, q
        self.exponents = exponents
        self.scale = (box.s_max, box.i_max)

    def _blocks(self, s: np.ndarray, i: np.ndarray):
        E, (S, I) = self.exponents, self.scale
        B = basis_matrix(E, self.scale, s, i)
        ds = np.zeros_like(B)
        di = np.zeros_like(B)
        for k, (e1, e2) in enumerate(E):
            if e1:
                ds[:, k] = e1 * basis_matrix(np.array([[e1 - 1, e2]]), self.scale, s, i)[:, 0] / S
            if e2:
                di[:, k] = e2 * basis_matrix(np.array([[e1, e2 - 1]]), self.scale, s, i)[:, 0] / I
        return B, ds, di

    def rows(self, s: np.ndarray, i: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Rows for the node lists s, i (same length) at every control in a."""
        B, ds, di = self._blocks(s, i)
        beta, gamma = self.p.beta, self.p.gamma
        l1 = np.atleast_1d(self.c(s, i, 0.0))
        A_rows = [-B]
        b_rows = [np.zeros(len(s))]
        for av in a:
            flux = beta * (1.0 - av) * s * i
            growth = (beta * (1.0 - av) * s - gamma) * i
            A_rows.append(self.q * B + flux[:, None] * ds - growth[:, None] * di)
            b_rows.append(l1)
        return np.vstack(A_rows), np.concatenate(b_rows)

    def violation(self, coeffs: np.ndarray, s: np.ndarray, i: np.ndarray, a_max: float) -> np.ndarray:
        """Worst sampled violation per (s, i) node; the inequality is affine in a."""
        B, ds, di = self._blocks(s, i)
        pv, psv, piv = B @ coeffs, ds @ coeffs, di @ coeffs
        l1 = np.atleast_1d(self.c(s, i, 0.0))
        beta, gamma = self.p.beta, self.p.gamma
        worst = -pv
        for av in (0.0, a_max):
            lhs = self.q * pv + beta * (1 - av) * s * i * psv - (beta * (1 - av) * s - gamma) * i * piv
            worst = np.maximum(worst, lhs - l1)
        return worst


def backward_step(
    r: int,
    c: CostModel,
    p: EpidemicParams,
    gamma2_hat: Scenario,
    grid: Optional[PositivityGrid] = None,
    box: Optional[Box] = None,
) -> Cut:
    """
    Best polynomial subsolution at the terminal measure gamma2_hat.

    Solves, over coefficients of p of degree <= 2r in (s, i),
        max <q p, gamma2_hat>
        s.t. p >= 0 and q p - l1 + p_s beta(1-a) s i - p_i (beta(1-a) s - gamma) i <= 0
    at every node of the sampled box, then appends the worst fine-grid
    violators and resolves for a few rounds.
    """
    if p.q <= 0:
        raise DomainError("backward step needs a discount rate q > 0")
    if not c.control_independent:
        raise DomainError(f"backward step needs a control-independent cost, got {c.name}")
    if r < 0:
        raise DomainError(f"degree parameter must be >= 0, got {r}")
    grid = grid or PositivityGrid()
    box = box or Box.default(p)
    q = p.q

    exps = np.array(monomial_exponents(2 * r))
    rows = _SubsolutionRows(p, c, q, exps, box)
    s_ax, i_ax, a_ax = grid.nodes(box)
    S, I = np.meshgrid(s_ax, i_ax, indexing="ij")
    A_ub, b_ub = rows.rows(S.ravel(), I.ravel(), a_ax)

    support = [(x, w) for x, w in gamma2_hat.support if box.contains(x)]
    if not support:
        raise DomainError("terminal measure has no support inside the sampling box")
    objective = q * sum(w * basis_matrix(exps, rows.scale, [x.s], [x.i])[0] for x, w in support)

    fs, fi, _ = grid.nodes(box, grid.refine)
    FS, FI = (g.ravel() for g in np.meshgrid(fs, fi, indexing="ij"))

    rounds = 0
    while True:
        res = maximize_over_inequalities(objective, A_ub, b_ub, grid.coef_bound)
        if res.status is not LPStatus.OPTIMAL:
            raise DomainError(f"backward LP returned {res.status.value}")
        viol = rows.violation(res.x, FS, FI, box.a_max)
        bad = np.flatnonzero(viol > grid.violation_tol)
        if bad.size == 0 or rounds >= grid.generation_rounds:
            break
        top = bad[np.argsort(viol[bad])[::-1][: grid.generation_batch]]
        A_new, b_new = rows.rows(FS[top], FI[top], np.array([0.0, box.a_max]))
        A_ub, b_ub = np.vstack([A_ub, A_new]), np.concatenate([b_ub, b_new])
        rounds += 1
        logger.debug(f"cut generation round {rounds}: {bad.size} violators, worst {viol.max():.3e}")

    margin = max(0.0, float(viol.max()))
    poly = Polynomial(exps, res.x, rows.scale)
    cut = Cut(poly, res.value, margin, rounds)
    if not cut.audited:
        logger.warning(f"⚠️ cut audit: worst sampled violation {margin:.3e} above {AUDIT_LIMIT:g}")
    return cut


# =============================================================================
# Forward step
# =============================================================================

@dataclass
class ScenarioPlan:
    """A policy to simulate; built up front so scenario sets are seed-deterministic."""

    name: str
    kind: str  # "constant", "greedy", "piecewise"
    level: float = 0.0
    breakpoints: tuple = ()


def scenario_plans(p: EpidemicParams, T: float, budget: int, seed: int) -> list[ScenarioPlan]:
    """Constant controls on an a-grid, the greedy feedback, then random piecewise-constant policies."""
    if budget < 1:
        raise DomainError("scenario budget must be at least 1")
    plans = [ScenarioPlan("greedy", "greedy")]
    n_const = min(budget - 1, max(2, budget // 5))
    for a in np.linspace(0.0, p.abar, n_const) if n_const > 0 else []:
        plans.append(ScenarioPlan(f"constant a={a:.4g}", "constant", float(a)))
    rng = np.random.default_rng(seed)
    while len(plans) < budget:
        n_switch = int(rng.integers(1, 5))
        times = np.sort(rng.uniform(0.0, T, n_switch))
        levels = rng.uniform(0.0, p.abar, n_switch + 1)
        bps = ((0.0, float(levels[0])),) + tuple((float(t), float(v)) for t, v in zip(times, levels[1:]))
        plans.append(ScenarioPlan(f"piecewise #{len(plans)}", "piecewise", breakpoints=bps))
    return plans


def _simulate_plan(p: EpidemicParams, plan: ScenarioPlan, x0: State, T: float, step: float) -> Trajectory:
    if plan.kind == "greedy":
        return greedy_trajectory(p, x0, horizon=T, step=step, continue_in_green=True)
    u = ConstantControl(plan.level) if plan.kind == "constant" else PiecewiseConstant(plan.breakpoints)
    return integrate(p, x0, u, T, step)


def build_scenario(
    p: EpidemicParams,
    c: CostModel,
    x0: State,
    T: float,
    r: int,
    plan: ScenarioPlan,
    step: float = 1e-2,
) -> Optional[Scenario]:
    """Simulate a plan over [0, T]; None if the path is not admissible."""
    if plan.kind == "greedy" and not classify(p, x0).viable:
        return None
    tr = _simulate_plan(p, plan, x0, T, step)
    if tr.terminal_event == TerminalEvent.STEP_FAILURE or abs(tr.t[-1] - T) > 1e-9 * max(1.0, T):
        return None
    end = tr.endpoint
    if tr.max_infection() > p.istar + FEASIBLE_TOL or not classify(p, end).viable:
        return None
    q = p.q
    stage = trajectory_integral(tr, lambda t, s, i, a: q * np.exp(-q * t) * np.asarray(c(s, i, a)))
    moments = trajectory_to_moments(tr, p, T, r, q)
    return Scenario([(end, 1.0)], plan.name, moments, stage, tr)


def generate_scenarios(
    p: EpidemicParams,
    c: CostModel,
    x0: State,
    T: float,
    r: int,
    budget: int,
    seed: int,
    step: float = 1e-2,
    threads: int = 1,
) -> list[Scenario]:
    """Admissible scenarios from x0, in plan order."""
    plans = scenario_plans(p, T, budget, seed)
    work = lambda plan: build_scenario(p, c, x0, T, r, plan, step)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            built = list(pool.map(work, plans))
    else:
        built = [work(plan) for plan in plans]
    scenarios = [sc for sc in built if sc is not None]
    dropped = len(plans) - len(scenarios)
    if dropped:
        logger.debug(f"dropped {dropped} inadmissible scenarios of {len(plans)}")
    if not scenarios:
        raise NoFeasibleScenario(f"no admissible scenario from ({x0.s}, {x0.i})")
    return scenarios


def scenario_value(cs: CutSet, sc: Scenario, T: float) -> float:
    """Stage cost plus discounted cut bound at the terminal measure."""
    return sc.stage_cost + math.exp(-cs.q * T) * lower_bound(cs, sc)


@dataclass
class ForwardResult:
    best: Scenario
    gamma_lower: float
    values: list[float]


def forward_step(
    p: EpidemicParams,
    c: CostModel,
    cs: CutSet,
    x0: State,
    T: float,
    scenario_budget: int = 50,
    seed: int = 0,
    scenarios: Optional[Sequence[Scenario]] = None,
    step: float = 1e-2,
    threads: int = 1,
) -> ForwardResult:
    """
    Pick the scenario minimizing stage cost + e^{-qT} b(gamma2).

    Scenarios are generated from seed unless given.
    """
    if not cs.cuts:
        raise EmptyCutSet("forward step needs at least one cut")
    if scenarios is None:
        scenarios = generate_scenarios(p, c, x0, T, cs.r, scenario_budget, seed, step, threads)
    values = [scenario_value(cs, sc, T) for sc in scenarios]
    best = int(np.argmin(values))
    return ForwardResult(scenarios[best], values[best], values)


# =============================================================================
# Two-stage loop
# =============================================================================

@dataclass
class IterationRecord:
    iter: int
    lower: float
    upper: float
    gamma_lower: float
    gamma_upper: float
    gap: float
    cut_coeffs: list[float]
    worst_positivity_margin: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class TwoStageResult:
    records: list[IterationRecord]
    cuts: CutSet
    scenarios: list[Scenario]
    reach: Optional[ReachableSpec] = None
    gap_tol: float = 0.0

    @property
    def lower_trace(self) -> list[float]:
        return [rec.lower for rec in self.records]

    @property
    def upper_trace(self) -> list[float]:
        return [rec.upper for rec in self.records]

    @property
    def gamma_lower_trace(self) -> list[float]:
        return [rec.gamma_lower for rec in self.records]

    @property
    def converged(self) -> bool:
        return bool(self.records) and self.records[-1].gap <= self.gap_tol


def _continuation(p: EpidemicParams, c: CostModel, x: State, q: float, step: float) -> float:
    """Cheapest of the greedy and full-confinement policies from x, q-weighted."""
    costs = []
    for policy in ("greedy", ConstantControl(p.abar)):
        try:
            costs.append(discounted_policy_cost(p, c, x, q, policy, step=step))
        except (ValidationFailure, StepFailure) as exc:
            logger.debug(f"continuation from {x} under {policy}: {exc}")
    return min(costs, default=math.inf)


def reachable_scenarios(
    reach: ReachableSpec,
    scenarios: Sequence[Scenario],
    tol: float = 1e-6,
) -> list[Scenario]:
    """Scenarios whose endpoint lies in the reachable set; the rest are dropped."""
    kept = [sc for sc in scenarios if membership(reach, sc.endpoint, tol)]
    dropped = len(scenarios) - len(kept)
    if dropped:
        logger.warning(f"⚠️ dropped {dropped} of {len(scenarios)} scenarios ending outside the reachable set")
    if not kept:
        raise NoFeasibleScenario(f"no scenario from ({reach.x0.s}, {reach.x0.i}) ends in the reachable set")
    return kept


def scenario_upper_bound(
    p: EpidemicParams,
    c: CostModel,
    scenarios: Sequence[Scenario],
    T: float,
    step: float = 1e-2,
) -> float:
    """Best stage cost plus discounted feasible continuation; fills sc.continuation."""
    decay = math.exp(-p.q * T)
    for sc in scenarios:
        if sc.continuation is None:
            sc.continuation = _continuation(p, c, sc.endpoint, p.q, step)
    return min(sc.stage_cost + decay * sc.continuation for sc in scenarios)


def two_stage_solve(
    p: EpidemicParams,
    c: CostModel,
    x0: State,
    r: int,
    T: float,
    max_iters: int = 10,
    gap_tol: float = 1e-6,
    scenario_budget: int = 50,
    seed: int = 0,
    grid: Optional[PositivityGrid] = None,
    depth: int = 1,
    step: float = 1e-2,
    threads: int = 1,
) -> TwoStageResult:
    """
    Alternate forward and backward steps until the scenario gap closes.

    Each record carries a certified bracket: lower is the cut bound at the
    Dirac measure at x0, upper the best scenario stage cost plus a feasible
    continuation. gamma_lower and gamma_upper are the forward-stage bounds
    whose difference drives the stopping rule.
    """
    if p.q <= 0:
        raise DomainError("two-stage solve needs a discount rate q > 0")
    if depth < 1:
        raise DomainError("depth must be at least 1")
    q = p.q
    decay = math.exp(-q * T)
    box = Box.default(p, x0.s)
    grid = grid or PositivityGrid()
    cs = CutSet(r, q, box)
    start = Scenario.dirac(x0, "start")

    cs.add(backward_step(r, c, p, start, grid, box))
    reach = reachable_spec(p, x0, T)
    scenarios = reachable_scenarios(
        reach, generate_scenarios(p, c, x0, T, r, scenario_budget, seed, step, threads))
    upper = scenario_upper_bound(p, c, scenarios, T, step)

    records: list[IterationRecord] = []
    chains: dict[State, list[Scenario]] = {}
    for it in range(1, max_iters + 1):
        started = time.perf_counter()
        fwd = forward_step(p, c, cs, x0, T, scenarios=scenarios)
        chain = [fwd.best]
        for _ in range(depth - 1):
            x = chain[-1].endpoint
            if x not in chains:
                chains[x] = reachable_scenarios(
                    reachable_spec(p, x, T),
                    generate_scenarios(p, c, x, T, r, scenario_budget, seed, step, threads))
            chain.append(forward_step(p, c, cs, x, T, scenarios=chains[x]).best)

        cut = None
        for sc in reversed(chain):
            cut = backward_step(r, c, p, Scenario(sc.support, sc.policy), grid, box)
            cs.add(cut)

        gamma_upper = fwd.best.stage_cost + decay * lower_bound(cs, fwd.best)
        lower = lower_bound(cs, start)
        rec = IterationRecord(
            iter=it,
            lower=lower,
            upper=upper,
            gamma_lower=fwd.gamma_lower,
            gamma_upper=gamma_upper,
            gap=gamma_upper - fwd.gamma_lower,
            cut_coeffs=[float(v) for v in cut.poly.coeffs],
            worst_positivity_margin=max(cs.margins),
        )
        records.append(rec)
        logger.info(f"iteration {it}: lower={lower:.8g} upper={upper:.8g} "
                    f"gap={rec.gap:.3e} best={fwd.best.policy} in {time.perf_counter() - started:.2f}s")
        if rec.gap <= gap_tol:
            logger.info(f"✅ scenario gap {rec.gap:.3e} <= {gap_tol:g} after {it} iterations")
            break

    return TwoStageResult(records, cs, list(scenarios), reach, gap_tol)
