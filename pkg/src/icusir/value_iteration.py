"""
Semi-Lagrangian value iteration for the discounted, state-constrained problem.

V(x) = min_a (1 - e^{-q dt}) (l1(x) + l1(x')) / 2 + e^{-q dt} V(x'),
with x' one Heun step from x and V(x') read by bilinear interpolation.
Moves that break i <= i* are penalized. Used as an independent check of the
dual bounds, never as a solver of record.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from loguru import logger
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse import csr_matrix, vstack

from .costs import CostModel
from .errors import DomainError, IterationLimit
from .params import EpidemicParams, State

FEASIBLE_SLACK = 1e-10


@dataclass
class ValueGrid:
    n_s: int = 200
    n_i: int = 200
    n_a: int = 64
    dt: float = 0.25
    tol: float = 1e-9
    max_iter: int = 50_000
    s_max: Optional[float] = None  # defaults to gamma/(beta(1-abar))

    def __post_init__(self):
        if min(self.n_s, self.n_i, self.n_a) < 2 or self.dt <= 0:
            raise DomainError("value grid needs >= 2 nodes per axis and dt > 0")

    def coarsened(self) -> "ValueGrid":
        return ValueGrid(self.n_s // 2 + 1, self.n_i // 2 + 1, self.n_a, self.dt,
                         self.tol, self.max_iter, self.s_max)


@dataclass
class ValueIterationResult:
    s_axis: np.ndarray
    i_axis: np.ndarray
    values: np.ndarray  # (n_s, n_i)
    iterations: int
    residual: float
    penalty: float

    def __call__(self, x: State) -> float:
        interp = RegularGridInterpolator((self.s_axis, self.i_axis), self.values)
        pt = [[min(max(x.s, 0.0), self.s_axis[-1]), min(max(x.i, 0.0), self.i_axis[-1])]]
        return float(interp(pt)[0])

    def feasible_mask(self) -> np.ndarray:
        return self.values < 0.5 * self.penalty


def _heun(p: EpidemicParams, s: np.ndarray, i: np.ndarray, a: float, dt: float):
    c = p.beta * (1.0 - a)

    def f(s, i):
        flux = c * s * i
        return -flux, flux - p.gamma * i

    k1s, k1i = f(s, i)
    k2s, k2i = f(s + dt * k1s, i + dt * k1i)
    return s + 0.5 * dt * (k1s + k2s), i + 0.5 * dt * (k1i + k2i)


def _bilinear(s_axis: np.ndarray, i_axis: np.ndarray, s: np.ndarray, i: np.ndarray) -> csr_matrix:
    """Sparse rows of bilinear interpolation weights on the flattened (s, i) grid."""
    ns, ni = len(s_axis), len(i_axis)
    ds, di = s_axis[1] - s_axis[0], i_axis[1] - i_axis[0]
    js = np.clip(np.floor(s / ds).astype(int), 0, ns - 2)
    ji = np.clip(np.floor(i / di).astype(int), 0, ni - 2)
    ws = np.clip((s - s_axis[js]) / ds, 0.0, 1.0)
    wi = np.clip((i - i_axis[ji]) / di, 0.0, 1.0)
    rows = np.arange(len(s))
    data, cols, rr = [], [], []
    for dsk, dik, w in ((0, 0, (1 - ws) * (1 - wi)), (1, 0, ws * (1 - wi)),
                        (0, 1, (1 - ws) * wi), (1, 1, ws * wi)):
        data.append(w)
        cols.append((js + dsk) * ni + ji + dik)
        rr.append(rows)
    return csr_matrix((np.concatenate(data), (np.concatenate(rr), np.concatenate(cols))),
                      shape=(len(s), ns * ni))


def value_iteration(p: EpidemicParams, c: CostModel, grid: Optional[ValueGrid] = None) -> ValueIterationResult:
    """
    Fixed point of the discretized Bellman operator on [0, S] x [0, i*].

    Raises:
        DomainError: q <= 0
        IterationLimit: no convergence within grid.max_iter sweeps
    """
    if p.q <= 0:
        raise DomainError("value iteration needs a discount rate q > 0")
    grid = grid or ValueGrid()
    S = grid.s_max or p.yellow_threshold
    s_axis = np.linspace(0.0, S, grid.n_s)
    i_axis = np.linspace(0.0, p.istar, grid.n_i)
    SS, II = (g.ravel() for g in np.meshgrid(s_axis, i_axis, indexing="ij"))
    n = SS.size
    rho = math.exp(-p.q * grid.dt)

    controls = np.linspace(0.0, p.abar, grid.n_a)
    here = np.asarray(c(SS, II, 0.0), float)
    penalty = 1e3 * max(1.0, float(np.abs(here).max()))
    stages, blocks = [], []
    for a in controls:
        s1, i1 = _heun(p, SS, II, a, grid.dt)
        feasible = i1 <= p.istar + FEASIBLE_SLACK
        s1, i1 = np.clip(s1, 0.0, S), np.clip(i1, 0.0, p.istar)
        cost = (1.0 - rho) * 0.5 * (np.asarray(c(SS, II, a), float) + np.asarray(c(s1, i1, a), float))
        stages.append(np.where(feasible, cost, penalty))
        blocks.append(_bilinear(s_axis, i_axis, s1, i1))
    P = vstack(blocks).tocsr()
    C = np.stack(stages)

    V = np.zeros(n)
    for it in range(1, grid.max_iter + 1):
        V_new = np.minimum((C + rho * (P @ V).reshape(len(controls), n)).min(axis=0), penalty)
        residual = float(np.abs(V_new - V).max())
        V = V_new
        if residual < grid.tol:
            break
    else:
        raise IterationLimit(f"value iteration did not converge in {grid.max_iter} sweeps "
                             f"(residual {residual:.3e})")

    logger.debug(f"value iteration {grid.n_s}x{grid.n_i}x{grid.n_a} converged in {it} sweeps")
    return ValueIterationResult(s_axis, i_axis, V.reshape(grid.n_s, grid.n_i), it, residual, penalty)


@dataclass
class OracleEstimate:
    value: float
    tolerance: float
    coarse: float

    @property
    def interval(self) -> tuple[float, float]:
        return self.value - self.tolerance, self.value + self.tolerance


def value_oracle(p: EpidemicParams, c: CostModel, x0: State,
                 grid: Optional[ValueGrid] = None) -> OracleEstimate:
    """Value at x0 with a tolerance band from a half-resolution rerun."""
    grid = grid or ValueGrid()
    fine = value_iteration(p, c, grid)(x0)
    coarse = value_iteration(p, c, grid.coarsened())(x0)
    return OracleEstimate(fine, abs(fine - coarse) + 10 * grid.tol / (1 - math.exp(-p.q * grid.dt)), coarse)
