"""Dense linear-algebra kernels for the square-root filter.

All factors are lower triangular, ``A = L @ L.T``. Functions never modify
their inputs.

Two tolerances are library-wide:

``symmetry``
    relative asymmetry accepted by :func:`cholesky_factor` (default 1e-10).
``eig_floor``
    relative pivot floor below which a matrix is declared not positive
    definite, or a downdate is declared to break positive definiteness
    (default 1e-12).

Both live in :data:`TOLERANCES` and are changed through
:func:`set_tolerances`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import DowndateBreaksSPD, NotPositiveDefinite, RankDeficient


@dataclass(frozen=True)
class Tolerances:
    symmetry: float = 1e-10
    eig_floor: float = 1e-12


TOLERANCES = Tolerances()


def set_tolerances(**kwargs) -> Tolerances:
    """Replace library tolerances; returns the previous value."""
    global TOLERANCES
    previous = TOLERANCES
    TOLERANCES = replace(TOLERANCES, **kwargs)
    return previous


def cholesky_factor(A):
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises:
        NotPositiveDefinite: if ``A`` is asymmetric beyond tolerance, has
            non-finite entries, or a pivot falls below the eigenvalue floor
            (relative to the largest diagonal entry).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or n < 1:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    scale = max(float(np.max(np.abs(np.diag(A)))), np.finfo(float).tiny)
    if np.max(np.abs(A - A.T)) > TOLERANCES.symmetry * max(scale, 1.0):
        raise NotPositiveDefinite("matrix is not symmetric")
    try:
        L = scipy.linalg.cholesky(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diag(L) ** 2
    if np.min(pivots) <= TOLERANCES.eig_floor * scale:
        raise NotPositiveDefinite(
            f"pivot {np.min(pivots):.3e} below floor (scale {scale:.3e})"
        )
    return L


def chol_rank_one(U, x, w: float = 1.0):
    """Factor of ``U @ U.T + w * outer(x, x)`` computed from ``U``.

    ``w < 0`` is a downdate, done with hyperbolic rotations. Each pivot is
    checked; a non-positive one raises instead of being clamped.
    """
    L = np.array(U, dtype=float, copy=True)
    x = np.array(x, dtype=float, copy=True).reshape(-1)
    n = L.shape[0]
    if x.shape[0] != n:
        raise ValueError(f"vector length {x.shape[0]} != factor size {n}")
    if not math.isfinite(w):
        raise ValueError("weight must be finite")
    if w == 0.0 or not np.any(x):
        return L
    sign = 1.0 if w > 0 else -1.0
    x *= math.sqrt(abs(w))
    floor = TOLERANCES.eig_floor
    for k in range(n):
        lkk = L[k, k]
        xk = x[k]
        if xk == 0.0:
            continue
        r2 = lkk * lkk + sign * xk * xk
        if not r2 > floor * lkk * lkk:
            raise DowndateBreaksSPD(f"pivot {k}: {r2:.3e}")
        r = math.sqrt(r2)
        c = r / lkk
        s = xk / lkk
        L[k, k] = r
        if k + 1 < n:
            col = (L[k + 1:, k] + sign * s * x[k + 1:]) / c
            L[k + 1:, k] = col
            x[k + 1:] = c * x[k + 1:] - s * col
    return L


def chol_rank_update(U, X, w: float = 1.0):
    """Apply :func:`chol_rank_one` for every column of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return chol_rank_one(U, X, w)
    L = np.asarray(U, dtype=float)
    for j in range(X.shape[1]):
        L = chol_rank_one(L, X[:, j], w)
    return L


def qr_r_factor(A):
    """Lower factor ``L`` with ``L @ L.T == A.T @ A``, i.e. the transposed
    R factor of ``A`` with its diagonal made non-negative."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rows, cols = A.shape
    if rows < cols:
        raise ValueError(f"need rows >= cols, got {A.shape}")
    R = scipy.linalg.qr(A, mode="r", check_finite=False)[0][:cols]
    signs = np.where(np.diag(R) < 0.0, -1.0, 1.0)
    R = signs[:, None] * R
    norm = np.linalg.norm(A)
    if np.min(np.diag(R)) <= 1e-12 * norm:
        raise RankDeficient(
            f"R diagonal {np.min(np.diag(R)):.3e} vs norm {norm:.3e}"
        )
    return np.tril(R.T)


def solve_with_factor(U, B):
    """Solve ``(U @ U.T) X = B`` by two triangular solves."""
    B = np.asarray(B, dtype=float)
    return scipy.linalg.cho_solve((U, True), B, check_finite=False)
