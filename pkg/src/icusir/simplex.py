"""
Dense two-phase primal simplex.

Small LPs only: the tableau is a full numpy array and Bland's rule picks
entering and leaving variables, so degenerate problems cannot cycle.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from .errors import CertificateFailure, DomainError, IterationLimit

MAX_PIVOTS = 1_000_000
PIVOT_TOL = 1e-9
CERT_TOL = 1e-9

SENSES = ("<=", "=", ">=")


class LPStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class LinearProgramSpec:
    """
    optimize objective @ x  s.t.  A[k] @ x (senses[k]) b[k],  lo <= x <= hi.

    Bounds default to x >= 0; use None or +-inf for open ends.
    """

    objective: np.ndarray
    A: np.ndarray
    senses: Sequence[str]
    b: np.ndarray
    bounds: Optional[Sequence[tuple[Optional[float], Optional[float]]]] = None
    maximize: bool = True

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = len(self.objective)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.senses = list(self.senses)
        if len(self.b) != self.A.shape[0] or len(self.senses) != self.A.shape[0]:
            raise DomainError("constraint rows, senses and right-hand sides differ in length")
        if any(s not in SENSES for s in self.senses):
            raise DomainError(f"constraint senses must be among {SENSES}")
        for arr in (self.objective, self.A, self.b):
            if not np.isfinite(arr).all():
                raise DomainError("LP data must be finite")
        if self.bounds is None:
            self.bounds = [(0.0, None)] * n
        if len(self.bounds) != n:
            raise DomainError("one bound pair per variable expected")
        norm = lambda v, d: d if v is None else float(v)
        self.bounds = [(norm(lo, -math.inf), norm(hi, math.inf)) for lo, hi in self.bounds]
        if any(lo > hi for lo, hi in self.bounds):
            raise DomainError("variable lower bound above upper bound")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LPResult:
    status: LPStatus
    value: float = math.nan
    x: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is LPStatus.OPTIMAL


# =============================================================================
# Standard form
# =============================================================================

@dataclass
class _StandardForm:
    """min c @ y  s.t.  M y = rhs,  y >= 0, plus the map back to x."""

    c: np.ndarray
    M: np.ndarray
    rhs: np.ndarray
    row_sign: np.ndarray  # +1 or -1 per row after making rhs >= 0
    slack_cols: dict[int, int]  # row -> column of a +1 slack (usable as start basis)
    columns: list[tuple[int, float]]  # structural column -> (variable, sign)
    offset: np.ndarray  # x = offset + sum sign * y
    n_struct: int


def _standard_form(spec: LinearProgramSpec) -> _StandardForm:
    m0, n = spec.shape
    A = spec.A
    b = spec.b.copy()
    obj = -spec.objective if spec.maximize else spec.objective.copy()

    cols, costs, columns = [], [], []
    offset = np.zeros(n)
    extra_rows: list[tuple[int, float]] = []  # (structural column, upper limit)
    for j, (lo, hi) in enumerate(spec.bounds):
        if math.isfinite(lo):
            offset[j] = lo
            b -= A[:, j] * lo
            cols.append(A[:, j]); costs.append(obj[j]); columns.append((j, 1.0))
            if math.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif math.isfinite(hi):
            offset[j] = hi
            b -= A[:, j] * hi
            cols.append(-A[:, j]); costs.append(-obj[j]); columns.append((j, -1.0))
        else:
            cols.append(A[:, j]); costs.append(obj[j]); columns.append((j, 1.0))
            cols.append(-A[:, j]); costs.append(-obj[j]); columns.append((j, -1.0))

    n_struct = len(cols)
    M = np.column_stack(cols) if cols else np.zeros((m0, 0))
    senses = list(spec.senses)
    if extra_rows:
        R = np.zeros((len(extra_rows), n_struct))
        for k, (col, _) in enumerate(extra_rows):
            R[k, col] = 1.0
        M = np.vstack([M, R])
        b = np.concatenate([b, [lim for _, lim in extra_rows]])
        senses += ["<="] * len(extra_rows)

    m = M.shape[0]
    slack_sign = {k: (1.0 if s == "<=" else -1.0) for k, s in enumerate(senses) if s != "="}
    S = np.zeros((m, len(slack_sign)))
    slack_of_row = {}
    for pos, (k, sign) in enumerate(slack_sign.items()):
        S[k, pos] = sign
        slack_of_row[k] = n_struct + pos
    M = np.hstack([M, S])
    c = np.concatenate([costs, np.zeros(S.shape[1])])

    row_sign = np.where(b < 0, -1.0, 1.0)
    M *= row_sign[:, None]
    b *= row_sign
    usable = {k: col for k, col in slack_of_row.items() if M[k, col] > 0}
    return _StandardForm(c, M, b, row_sign, usable, columns, offset, n_struct)


# =============================================================================
# Tableau
# =============================================================================

class _Tableau:
    def __init__(self, T: np.ndarray, basis: list[int], max_pivots: int, pivots: int = 0):
        self.T = T
        self.basis = basis
        self.max_pivots = max_pivots
        self.pivots = pivots

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    def pivot(self, r: int, j: int):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j
        self.pivots += 1
        if self.pivots > self.max_pivots:
            raise IterationLimit(f"simplex exceeded {self.max_pivots} pivots")

    def run(self, n_cols: int, tol: float) -> LPStatus:
        """Bland's rule on the first n_cols columns."""
        T, m = self.T, self.m
        while True:
            rc = T[-1, :n_cols]
            entering = np.flatnonzero(rc < -tol)
            if entering.size == 0:
                return LPStatus.OPTIMAL
            j = int(entering[0])
            col = T[:m, j]
            rows = np.flatnonzero(col > tol)
            if rows.size == 0:
                return LPStatus.UNBOUNDED
            ratios = T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * (1.0 + abs(best))]
            r = int(ties[np.argmin([self.basis[k] for k in ties])])
            self.pivot(r, j)


def solve_lp(
    spec: LinearProgramSpec,
    max_pivots: int = MAX_PIVOTS,
    tol: float = PIVOT_TOL,
    cert_tol: float = CERT_TOL,
) -> LPResult:
    """
    Solve an LP with the two-phase simplex method.

    Returns:
        LPResult with the optimal value, primal point and row multipliers
        (sign convention: for a maximization, "<=" rows carry multipliers >= 0).

    Raises:
        IterationLimit: more than max_pivots pivots
        CertificateFailure: the final basis fails the reduced-cost check
    """
    sf = _standard_form(spec)
    m, ncols = sf.M.shape

    # phase 1: artificials on rows without a usable slack
    art_rows = [k for k in range(m) if k not in sf.slack_cols]
    n_art = len(art_rows)
    T = np.zeros((m + 1, ncols + n_art + 1))
    T[:m, :ncols] = sf.M
    T[:m, -1] = sf.rhs
    basis = [0] * m
    for pos, k in enumerate(art_rows):
        T[k, ncols + pos] = 1.0
        basis[k] = ncols + pos
    for k, col in sf.slack_cols.items():
        basis[k] = col
    for k in art_rows:
        T[-1] -= T[k]
    T[-1, ncols:ncols + n_art] = 0.0

    tab = _Tableau(T, basis, max_pivots)
    scale = 1.0 + float(np.abs(sf.rhs).max(initial=0.0))
    if n_art:
        tab.run(ncols + n_art, tol)
        infeas = -tab.T[-1, -1]
        if infeas > 1e-8 * scale:
            logger.debug(f"LP infeasible (phase-1 value {infeas:.3e})")
            return LPResult(LPStatus.INFEASIBLE, iterations=tab.pivots)

        # drive remaining artificials out, dropping redundant rows
        keep = []
        for r in range(m):
            if tab.basis[r] < ncols:
                keep.append(r)
                continue
            row = tab.T[r, :ncols]
            cand = np.flatnonzero(np.abs(row) > tol)
            if cand.size:
                tab.pivot(r, int(cand[0]))
                keep.append(r)
        rows_kept = keep
    else:
        rows_kept = list(range(m))

    T2 = np.vstack([tab.T[rows_kept][:, list(range(ncols)) + [-1]], np.zeros(ncols + 1)])
    basis2 = [tab.basis[r] for r in rows_kept]
    T2[-1, :ncols] = sf.c
    for r, j in enumerate(basis2):
        T2[-1] -= sf.c[j] * T2[r]
    tab2 = _Tableau(T2, basis2, max_pivots, tab.pivots)
    status = tab2.run(ncols, tol)
    if status is LPStatus.UNBOUNDED:
        return LPResult(LPStatus.UNBOUNDED, iterations=tab2.pivots)

    y = np.zeros(ncols)
    y[basis2] = tab2.T[:-1, -1]
    x = sf.offset.copy()
    for col, (var, sign) in enumerate(sf.columns):
        x[var] += sign * y[col]
    value = float(spec.objective @ x)

    # multipliers from the final basis and the reduced-cost certificate
    B = sf.M[rows_kept][:, basis2]
    pi_kept = np.linalg.solve(B.T, sf.c[basis2])
    reduced = sf.c - sf.M[rows_kept].T @ pi_kept
    cscale = 1.0 + float(np.abs(sf.c).max(initial=0.0))
    worst = float(reduced.min(initial=0.0))
    if worst < -cert_tol * cscale:
        raise CertificateFailure(f"reduced cost {worst:.3e} below -{cert_tol:g}")
    pi = np.zeros(m)
    pi[rows_kept] = pi_kept
    pi *= sf.row_sign
    m0 = spec.shape[0]
    duals = -pi[:m0] if spec.maximize else pi[:m0]

    logger.debug(f"LP optimal after {tab2.pivots} pivots: {value:.10g}")
    return LPResult(LPStatus.OPTIMAL, value, x, duals, tab2.pivots)


def maximize_over_inequalities(
    objective: np.ndarray,
    A_ub: np.ndarray,
    b_ub: np.ndarray,
    coef_bound: float,
    **kwargs,
) -> LPResult:
    """
    max objective @ x  s.t.  A_ub x <= b_ub,  |x_j| <= coef_bound.

    Solved through its dual (min b @ y, A^T y = objective, y >= 0), whose
    tableau has one row per variable instead of one per constraint. The
    primal point is read off the dual's row multipliers.
    """
    objective = np.asarray(objective, float)
    n = len(objective)
    A_all = np.vstack([A_ub, np.eye(n), -np.eye(n)])
    b_all = np.concatenate([b_ub, np.full(2 * n, coef_bound)])
    dual = LinearProgramSpec(
        objective=b_all, A=A_all.T, senses=["="] * n, b=objective,
        bounds=[(0.0, None)] * len(b_all), maximize=False,
    )
    res = solve_lp(dual, **kwargs)
    if res.status is LPStatus.INFEASIBLE:
        return LPResult(LPStatus.INFEASIBLE, iterations=res.iterations)
    if res.status is LPStatus.UNBOUNDED:
        return LPResult(LPStatus.INFEASIBLE, iterations=res.iterations)
    x = res.duals
    return LPResult(LPStatus.OPTIMAL, float(objective @ x), x, res.x, res.iterations,
                    {"dual_value": res.value})
