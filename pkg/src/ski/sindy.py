"""Batch sparse-regression baseline (SINDy with an l1 penalty).

Each state derivative column is fitted independently by cyclic coordinate
descent on

    0.5 * ||target - Psi xi||^2 + lam * ||xi||_1 .
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import TooFewSamples

MAX_SWEEPS = 10_000
TOL = 1e-8
DEFAULT_LAMBDA = 0.1


class NotConvergedWarning(RuntimeWarning):
    pass


def numeric_derivative(X, dt: float) -> np.ndarray:
    """Second-order central differences inside, one-sided at both ends."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 3:
        raise TooFewSamples(f"need at least 3 samples, got {X.shape[0]}")
    return np.gradient(X, dt, axis=0, edge_order=2)


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


@dataclass
class RegressionResult:
    coef: np.ndarray
    converged: bool
    sweeps: int
    objective: list


def lasso_objective(Psi, target, coef, lam):
    r = target - Psi @ coef
    return 0.5 * float(r @ r) + lam * float(np.sum(np.abs(coef)))


def sparse_regress_full(Psi, target, lam: float, max_sweeps: int = MAX_SWEEPS,
                        tol: float = TOL, track_objective: bool = False) -> RegressionResult:
    Psi = np.asarray(Psi, dtype=float)
    target = np.asarray(target, dtype=float)
    N, d = Psi.shape
    if N < d:
        warnings.warn(f"{N} samples for {d} unknowns; solution not unique", stacklevel=2)
    col_sq = np.einsum("ij,ij->j", Psi, Psi)
    coef = np.zeros(d)
    resid = target.copy()
    objective = [lasso_objective(Psi, target, coef, lam)] if track_objective else []
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_change = 0.0
        for j in range(d):
            if col_sq[j] == 0.0:
                continue
            old = coef[j]
            rho = Psi[:, j] @ resid + col_sq[j] * old
            new = soft_threshold(rho, lam) / col_sq[j]
            if new != old:
                resid -= Psi[:, j] * (new - old)
                coef[j] = new
                max_change = max(max_change, abs(new - old))
        if track_objective:
            objective.append(lasso_objective(Psi, target, coef, lam))
        if max_change < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"coordinate descent stopped after {sweeps} sweeps",
                      NotConvergedWarning, stacklevel=2)
    return RegressionResult(coef=coef, converged=converged, sweeps=sweeps, objective=objective)


def sparse_regress(Psi, target, lam: float) -> np.ndarray:
    """l1-penalized least squares by cyclic coordinate descent.

    Stops when no coefficient moves more than 1e-8 in a sweep, or after
    10,000 sweeps (then a :class:`NotConvergedWarning` is issued and the last
    iterate returned).
    """
    return sparse_regress_full(Psi, target, lam).coef


@dataclass
class SindyProblem:
    X: np.ndarray
    U: np.ndarray
    Xdot: np.ndarray
    Psi: np.ndarray
    lam: np.ndarray | float = DEFAULT_LAMBDA

    def __post_init__(self):
        n = self.Psi.shape[0]
        if self.Xdot.shape[0] != n or self.X.shape[0] != n:
            raise ValueError("row counts disagree")
        if not np.all(np.isfinite(self.Psi)):
            raise ValueError("library matrix has non-finite entries")


def sindy_identify(problem: SindyProblem, standardize: bool = True) -> np.ndarray:
    """Coefficient matrix ``Xi`` (d_Psi x d_x), one lasso per derivative column.

    With ``standardize`` the library columns are scaled to unit RMS before
    the fit and the coefficients scaled back afterwards. Columns are not
    centred, so a constant column stays meaningful.
    """
    Psi = np.asarray(problem.Psi, dtype=float)
    Xdot = np.asarray(problem.Xdot, dtype=float)
    if Xdot.ndim == 1:
        Xdot = Xdot[:, None]
    scale = np.ones(Psi.shape[1])
    if standardize:
        rms = np.sqrt(np.mean(Psi ** 2, axis=0))
        scale = np.where(rms > 0, rms, 1.0)
    Z = Psi / scale
    lam = np.broadcast_to(np.asarray(problem.lam, dtype=float), (Xdot.shape[1],))
    Xi = np.empty((Psi.shape[1], Xdot.shape[1]))
    for i in range(Xdot.shape[1]):
        Xi[:, i] = sparse_regress(Z, Xdot[:, i], float(lam[i])) / scale
    return Xi
