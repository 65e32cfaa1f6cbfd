"""
Dense multivariate polynomials in monomial form.

Variables may be scaled: a polynomial with scale (S, I) evaluates monomials
of (s/S, i/I), which keeps LP coefficient magnitudes comparable on small boxes.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError


def monomial_exponents(degree: int, nvars: int = 2) -> list[tuple[int, ...]]:
    """All exponent tuples of total degree <= degree, graded then lexicographic."""
    if degree < 0:
        return []
    out: list[tuple[int, ...]] = []

    def fill(prefix: tuple[int, ...], left: int, slots: int):
        if slots == 1:
            out.append(prefix + (left,))
            return
        for e in range(left, -1, -1):
            fill(prefix + (e,), left - e, slots - 1)

    for total in range(degree + 1):
        fill((), total, nvars)
    return out


def basis_matrix(exponents: np.ndarray, scale: Sequence[float], *xs) -> np.ndarray:
    """Rows: points; columns: scaled monomials."""
    pts = [np.ravel(np.asarray(x, float)) / sc for x, sc in zip(xs, scale)]
    n = max(len(p) for p in pts)
    pts = [np.broadcast_to(p, (n,)) for p in pts]
    cols = np.ones((n, len(exponents)))
    for k, p in enumerate(pts):
        cols *= p[:, None] ** exponents[None, :, k]
    return cols


@dataclass(eq=False)
class Polynomial:
    exponents: np.ndarray  # (terms, nvars)
    coeffs: np.ndarray  # (terms,)
    scale: tuple[float, ...] = (1.0, 1.0)

    def __post_init__(self):
        self.exponents = np.asarray(self.exponents, dtype=int).reshape(len(self.coeffs), -1)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.exponents.shape[1] != len(self.scale):
            raise DomainError("scale must give one factor per variable")
        if np.isnan(self.coeffs).any():
            raise DomainError("polynomial coefficients contain NaN")

    @classmethod
    def zero(cls, degree: int = 0, nvars: int = 2, scale=None) -> "Polynomial":
        exps = monomial_exponents(degree, nvars)
        return cls(np.array(exps), np.zeros(len(exps)), tuple(scale or (1.0,) * nvars))

    @classmethod
    def from_terms(cls, terms: dict[tuple[int, ...], float], scale=None) -> "Polynomial":
        exps = list(terms)
        nvars = len(exps[0]) if exps else 2
        return cls(np.array(exps).reshape(len(exps), nvars), np.array(list(terms.values())),
                   tuple(scale or (1.0,) * nvars))

    @property
    def nvars(self) -> int:
        return self.exponents.shape[1]

    @property
    def degree(self) -> int:
        nz = np.abs(self.coeffs) > 0
        return int(self.exponents[nz].sum(axis=1).max()) if nz.any() else 0

    def __call__(self, *xs):
        shape = np.broadcast(*[np.asarray(x, float) for x in xs]).shape
        vals = basis_matrix(self.exponents, self.scale, *xs) @ self.coeffs
        return float(vals[0]) if shape == () else vals.reshape(shape)

    def partial(self, var: int) -> "Polynomial":
        """Derivative with respect to the unscaled variable var."""
        e = self.exponents[:, var]
        keep = e > 0
        exps = self.exponents[keep].copy()
        exps[:, var] -= 1
        coeffs = self.coeffs[keep] * e[keep] / self.scale[var]
        if not keep.any():
            return Polynomial(np.zeros((1, self.nvars), int), np.zeros(1), self.scale)
        return Polynomial(exps, coeffs, self.scale)

    def terms(self) -> dict[tuple[int, ...], float]:
        """Coefficients in unscaled monomials."""
        out: dict[tuple[int, ...], float] = {}
        for exp, coef in zip(self.exponents, self.coeffs):
            key = tuple(int(v) for v in exp)
            factor = np.prod([sc ** -int(v) for sc, v in zip(self.scale, exp)])
            out[key] = out.get(key, 0.0) + float(coef * factor)
        return out

    def to_dict(self) -> dict:
        return {
            "scale": list(self.scale),
            "terms": [[*map(int, e), float(c)] for e, c in zip(self.exponents, self.coeffs)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Polynomial":
        rows = np.asarray(data["terms"], float)
        return cls(rows[:, :-1].astype(int), rows[:, -1], tuple(data["scale"]))
