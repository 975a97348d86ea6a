"""Joint state/parameter filters over the augmented state.

Two filters share the :class:`~ski.model.ParametricModel` interface:

* a square-root (Cholesky-form) unscented Kalman filter, which carries the
  lower factor ``U`` of the augmented covariance and never forms it densely;
* an extended Kalman filter baseline with a dense covariance and
  finite-difference Jacobians.

The unscented scaling uses ``lambda = L (alpha^2 - 1)`` with no ``kappa``
term, so ``L + lambda = L alpha^2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DowndateBreaksSPD, InvalidHyper, NotPositiveDefinite
from .matkernels import (
    cholesky_factor,
    chol_rank_one,
    chol_rank_update,
    qr_r_factor,
    solve_with_factor,
)
from .model import (
    GaussianBelief,
    NoiseFactors,
    ParametricModel,
    augmented_transition,
    observe,
)

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 1e-3
DEFAULT_BETA = 2.0


@dataclass(frozen=True)
class UtWeights:
    L: int
    alpha: float
    beta: float
    lam: float
    eta: float
    Wm: np.ndarray
    Wc: np.ndarray


def ut_weights(L: int, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA) -> UtWeights:
    """Sigma-point weights for dimension ``L``.

    Raises:
        InvalidHyper: for ``alpha`` outside ``(0, 1]`` or ``L < 1``.
    """
    if L < 1:
        raise InvalidHyper(f"L must be >= 1, got {L}")
    if not 0.0 < alpha <= 1.0:
        raise InvalidHyper(f"alpha must be in (0, 1], got {alpha}")
    lam = L * (alpha * alpha - 1.0)
    c = L + lam
    Wm = np.full(2 * L + 1, 1.0 / (2.0 * c))
    Wc = Wm.copy()
    Wm[0] = lam / c
    Wc[0] = lam / c + (1.0 - alpha * alpha + beta)
    return UtWeights(L=L, alpha=alpha, beta=beta, lam=lam, eta=math.sqrt(c), Wm=Wm, Wc=Wc)


@dataclass(frozen=True)
class SigmaSet:
    points: np.ndarray
    propagated: np.ndarray | None = None
    measured: np.ndarray | None = None


def sigma_points(xi, U, eta: float) -> np.ndarray:
    """Columns ``[xi, xi + eta U, xi - eta U]``."""
    xi = np.asarray(xi, dtype=float)
    spread = eta * np.asarray(U, dtype=float)
    return np.hstack([xi[:, None], xi[:, None] + spread, xi[:, None] - spread])


def _center_update(U, dev0, w0: float, dense_fallback: bool = True):
    if w0 == 0.0:
        return U
    try:
        return chol_rank_one(U, dev0, w0)
    except DowndateBreaksSPD:
        if not dense_fallback or w0 > 0:
            raise
    # Negative centre weight: rebuild densely for this step.
    log.info("centre downdate failed; refactoring the dense covariance")
    P = U @ U.T + w0 * np.outer(dev0, dev0)
    P = 0.5 * (P + P.T)
    try:
        return cholesky_factor(P)
    except NotPositiveDefinite as exc:
        raise DowndateBreaksSPD(f"dense fallback failed: {exc}") from None


def srukf_predict(
    belief: GaussianBelief,
    u,
    model: ParametricModel,
    w: UtWeights,
    noise: NoiseFactors | None = None,
) -> GaussianBelief:
    """Unscented time update in Cholesky form."""
    noise = noise or model.noise_factors()
    chi = sigma_points(belief.xi, belief.U, w.eta)
    chi_pred = augmented_transition(model, chi, u)
    xi = chi_pred @ w.Wm
    dev = chi_pred - xi[:, None]
    d_x = model.dims.d_x
    compound = np.hstack([math.sqrt(w.Wc[1]) * dev[:, 1:], noise.Q_sqrt[:, :d_x]])
    U = qr_r_factor(compound.T)
    U = _center_update(U, dev[:, 0], w.Wc[0])
    return GaussianBelief(xi=xi, U=U)


@dataclass(frozen=True)
class Innovation:
    y_pred: np.ndarray
    Uy: np.ndarray
    C: np.ndarray
    K: np.ndarray


def srukf_innovation(belief, model, w, noise=None) -> Innovation:
    """Predicted measurement factor, cross-covariance and gain.

    Sigma points are redrawn from the predicted belief, so the process
    noise added in the time update is seen by the measurement statistics.
    """
    noise = noise or model.noise_factors()
    chi = sigma_points(belief.xi, belief.U, w.eta)
    gamma = observe(model, chi)
    y_pred = gamma @ w.Wm
    gdev = gamma - y_pred[:, None]
    compound = np.hstack([math.sqrt(w.Wc[1]) * gdev[:, 1:], noise.R_sqrt])
    Uy = qr_r_factor(compound.T)
    Uy = _center_update(Uy, gdev[:, 0], w.Wc[0])
    xdev = chi - belief.xi[:, None]
    C = (xdev * w.Wc) @ gdev.T
    K = solve_with_factor(Uy, C.T).T
    return Innovation(y_pred=y_pred, Uy=Uy, C=C, K=K)


def srukf_correct(
    belief: GaussianBelief,
    y,
    model: ParametricModel,
    w: UtWeights,
    noise: NoiseFactors | None = None,
) -> GaussianBelief:
    """Unscented measurement update; the factor is downdated by ``K Uy``.

    Raises:
        DowndateBreaksSPD: if the corrected covariance is not positive
            definite (the filter is inconsistent).
    """
    inn = srukf_innovation(belief, model, w, noise)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    xi = belief.xi + inn.K @ (y - inn.y_pred)
    U = chol_rank_update(belief.U, inn.K @ inn.Uy, -1.0)
    return GaussianBelief(xi=xi, U=U)


# --------------------------------------------------------------------------
# Extended Kalman filter
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DenseBelief:
    xi: np.ndarray
    Sigma: np.ndarray

    @property
    def cov(self) -> np.ndarray:
        return self.Sigma

    def factored(self) -> GaussianBelief:
        return GaussianBelief(xi=self.xi, U=cholesky_factor(self.Sigma))

    @classmethod
    def from_belief(cls, b: GaussianBelief) -> "DenseBelief":
        return cls(xi=b.xi.copy(), Sigma=b.U @ b.U.T)


def fd_jacobian(fun, x, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of a column-vectorized ``fun``.

    Step ``h_i = rel_step * max(1, |x_i|)``. All ``2n`` probes are evaluated
    as one batch.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    h = rel_step * np.maximum(1.0, np.abs(x))
    probes = np.hstack([x[:, None] + np.diag(h), x[:, None] - np.diag(h)])
    out = fun(probes)
    return (out[:, :n] - out[:, n:]) / (2.0 * h)


def transition_jacobian(model: ParametricModel, xi, u) -> np.ndarray:
    if model.jacobian is not None:
        return np.asarray(model.jacobian(xi, u), dtype=float)
    return fd_jacobian(lambda X: augmented_transition(model, X, u), xi)


def ekf_predict(belief: DenseBelief, u, model: ParametricModel) -> DenseBelief:
    J = transition_jacobian(model, belief.xi, u)
    xi = augmented_transition(model, belief.xi, u)
    d_x = model.dims.d_x
    Sigma = J @ belief.Sigma @ J.T
    Sigma[:d_x, :d_x] += model.Q
    return DenseBelief(xi=xi, Sigma=0.5 * (Sigma + Sigma.T))


def ekf_correct(belief: DenseBelief, y, model: ParametricModel) -> DenseBelief:
    """EKF measurement update (Joseph form, equal to ``(I - K H) Sigma``).

    Raises:
        NotPositiveDefinite: if the corrected covariance is not SPD.
    """
    d_x = model.dims.d_x
    L = model.dims.L_sigma
    H = np.zeros((model.dims.d_y, L))
    H[:, :d_x] = fd_jacobian(lambda X: observe(model, X), belief.xi)[:, :d_x]
    y = np.atleast_1d(np.asarray(y, dtype=float))
    S = H @ belief.Sigma @ H.T + model.R
    PHt = belief.Sigma @ H.T
    K = np.linalg.solve(S, PHt.T).T
    xi = belief.xi + K @ (y - observe(model, belief.xi))
    A = np.eye(L) - K @ H
    Sigma = A @ belief.Sigma @ A.T + K @ model.R @ K.T
    Sigma = 0.5 * (Sigma + Sigma.T)
    if not np.all(np.isfinite(Sigma)) or np.min(np.linalg.eigvalsh(Sigma)) <= 0.0:
        raise NotPositiveDefinite("EKF covariance lost positive definiteness")
    return DenseBelief(xi=xi, Sigma=Sigma)
