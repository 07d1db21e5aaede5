"""Nonnegative extended-real matrix calculus.

Matrices are plain ``numpy`` float arrays whose entries lie in ``[0, +inf]``.
Products follow the measure-theoretic convention ``inf * 0 = 0`` rather than
IEEE arithmetic (where it would be ``nan``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEUMANN_TOL = 1e-12
NEUMANN_MAX_TERMS = 10_000


def as_nonneg(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if np.isnan(A).any() or (A < 0).any():
        raise ValueError("matrix entries must lie in [0, +inf]")
    return A


def mat_mul(A, B) -> np.ndarray:
    """Product of nonnegative matrices with ``inf * 0 = 0``."""
    A = as_nonneg(A)
    B = as_nonneg(B)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    infA, infB = np.isinf(A), np.isinf(B)
    if not (infA.any() or infB.any()):
        return A @ B
    out = np.where(infA, 0.0, A) @ np.where(infB, 0.0, B)
    hits = (infA.astype(float) @ (B > 0).astype(float)) + ((A > 0).astype(float) @ infB.astype(float))
    out[hits > 0] = np.inf
    return out


def mat_pow(A, n: int) -> np.ndarray:
    A = as_nonneg(A)
    out = np.eye(A.shape[0])
    for _ in range(n):
        out = mat_mul(out, A)
    return out


def _saturating_sum(v: np.ndarray) -> float:
    return float(np.inf) if np.isinf(v).any() else float(v.sum())


def norm_inf(A) -> float:
    """Maximal row sum."""
    A = as_nonneg(A)
    if A.size == 0:
        return 0.0
    return max(_saturating_sum(row) for row in A)


def norm_1(A) -> float:
    """Maximal column sum."""
    return norm_inf(as_nonneg(A).T)


def check_pseudometric(m, tol: float = 1e-12) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("pseudometric must be a square matrix")
    if (m < 0).any() or np.any(np.diag(m) != 0) or not np.allclose(m, m.T, atol=tol):
        raise ValueError("pseudometric must be nonnegative, symmetric, zero on the diagonal")
    if np.any(m[:, None, :] > m[:, :, None] + m[None, :, :] + tol):
        raise ValueError("pseudometric violates the triangle inequality")
    return m


def weighted_norm_1(A, m, beta: float) -> float:
    """sup_j sum_i exp(beta * m(i, j)) * A_ij."""
    A = as_nonneg(A)
    m = check_pseudometric(m)
    if m.shape != A.shape:
        raise ValueError("pseudometric and matrix dimensions differ")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    weights = np.exp(beta * m)
    return norm_1(np.where(A == 0, 0.0, weights * A))


@dataclass
class NeumannResult:
    sum: np.ndarray
    converged: bool
    terms_used: int
    residual: float


def neumann_sum(A, tol: float = NEUMANN_TOL, max_terms: int = NEUMANN_MAX_TERMS) -> NeumannResult:
    """Partial sums of ``sum_k A^k`` until the current power drops below ``tol``.

    Convergence is declared when the largest entry of ``A^k`` is at most
    ``tol``; that power is included in the sum.  Divergence (or running out of
    terms) is reported through ``converged=False``, never raised.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = as_nonneg(A)
    n = A.shape[0]
    total = np.eye(n)
    power = np.eye(n)
    terms = 1
    residual = 1.0 if n else 0.0
    while terms < max_terms:
        power = mat_mul(power, A)
        total = total + power
        terms += 1
        residual = float(power.max()) if n else 0.0
        if residual <= tol:
            return NeumannResult(total, True, terms, residual)
        if not np.isfinite(residual):
            break
    return NeumannResult(total, False, terms, residual)


def spectral_radius(A, iterations: int = 200) -> float:
    """Power-iteration estimate of the spectral radius of ``|A|`` (diagnostic only)."""
    A = np.abs(np.asarray(A, dtype=float))
    if A.size == 0 or not np.isfinite(A).all():
        return float("inf") if A.size else 0.0
    v = np.ones(A.shape[0]) / A.shape[0]
    lam = 0.0
    for _ in range(iterations):
        w = A @ v
        s = w.sum()
        if s == 0:
            return 0.0
        lam = s / v.sum()
        v = w / s
    return float(lam)
