"""
Small dense symmetric eigenproblems.
"""

import math

import numpy as np
from loguru import logger

from .errors import DomainError

MAX_SWEEPS = 100
OFF_TOL = 1e-12


def jacobi_eigenvalues(matrix: np.ndarray, max_sweeps: int = MAX_SWEEPS,
                       tol: float = OFF_TOL) -> np.ndarray:
    """
    Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Returns:
        Ascending eigenvalues.
    """
    A = np.array(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {A.shape}")
    if not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max(initial=0.0))):
        raise DomainError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    n = A.shape[0]

    for sweep in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.tril(A, -1) ** 2)))
        if off < tol:
            return np.sort(np.diag(A))
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p, row_q = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q

    logger.warning(f"⚠️ Jacobi stopped after {max_sweeps} sweeps (off-diagonal {off:.3e})")
    return np.sort(np.diag(A))
