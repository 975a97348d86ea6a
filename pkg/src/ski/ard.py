"""Online automatic relevance determination for the augmented filter.

Each weight ``theta_i`` has a zero-mean Gaussian prior with variance
``s_i = softplus(s_tilde_i)``. After every filter tick the variances are
moved by a few gradient steps on a loss that measures how well the new
prior explains the current posterior, and the posterior is then re-weighted
to the new prior by a Kalman-style correction with the pseudo-observation
``0 = theta + v``, ``v ~ N(0, dS)``, where ``dS^-1 = 1/s_new - 1/s_old``.

``dS`` itself diverges when the prior does not change, so nothing here
forms it. Everything goes through the precision difference
``D = diag(1/s_new - 1/s_old)`` and the identity

    (S_t + dS)^-1 = (I + D S_t)^-1 D,

which is finite (zero) at ``D = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NotPositiveDefinite, SingularM
from .matkernels import cholesky_factor
from .model import Dims, GaussianBelief

DEFAULT_ETA_HP = 1e-2
DEFAULT_N_HP = 5
DEFAULT_VARIANCE_FLOOR = 1e-8
DEFAULT_REPORT_THRESHOLD = 1e-4
REPAIR_EIG_FLOOR = 1e-10


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(s):
    s = np.asarray(s, dtype=float)
    return s + np.log(-np.expm1(-s))


def softplus_grad_from_value(s):
    """Sigmoid of ``s_tilde`` written in terms of ``s = softplus(s_tilde)``."""
    return -np.expm1(-np.asarray(s, dtype=float))


@dataclass(frozen=True)
class ArdWorkspace:
    s_new: np.ndarray
    s_old: np.ndarray
    D_diag: np.ndarray
    A: np.ndarray
    M: np.ndarray
    q: np.ndarray
    r: np.ndarray
    S_t: np.ndarray
    L1: float
    L2: float

    @property
    def loss(self) -> float:
        return self.L1 + self.L2


def ard_loss(m_old, S_old_marg, s0_old, s_new):
    """ARD objective ``L1 + L2`` for a proposed prior ``s_new``.

    ``L1 = m^T (S_t + dS)^-1 m`` and ``L2 = log|S_new + (I - S_new S_old^-1) S_t|``.

    Returns:
        ``(loss, workspace)``; the workspace is reused by the gradient.

    Raises:
        SingularM: if the log-determinant argument is not positive.
    """
    m = np.asarray(m_old, dtype=float)
    S_t = np.asarray(S_old_marg, dtype=float)
    s_old = np.asarray(s0_old, dtype=float)
    s_new = np.asarray(s_new, dtype=float)
    n = m.size
    D = 1.0 / s_new - 1.0 / s_old
    B = np.eye(n) + D[:, None] * S_t
    try:
        # (I + D S_t)^-1 D == D (I + S_t D)^-1, so A m = D r with r below.
        r = np.linalg.solve(B.T, m)
        A = np.linalg.solve(B, np.diag(D))
    except np.linalg.LinAlgError:
        raise SingularM("I + D S_t is singular") from None
    A = 0.5 * (A + A.T)
    q = D * r
    M = np.diag(s_new) + (1.0 - s_new / s_old)[:, None] * S_t
    sign, logdet = np.linalg.slogdet(M)
    if sign <= 0 or not np.isfinite(logdet):
        raise SingularM(f"|M| not positive (sign {sign})")
    L1 = float(m @ q)
    ws = ArdWorkspace(
        s_new=s_new, s_old=s_old, D_diag=D, A=A, M=M, q=q, r=r, S_t=S_t,
        L1=L1, L2=float(logdet),
    )
    return ws.loss, ws


def ard_gradient(ws: ArdWorkspace, s_tilde=None, form: str = "exact"):
    """Gradient of the ARD loss with respect to ``s_tilde``.

    ``form="exact"`` is the derivative of :func:`ard_loss`:

        dL/ds_i = [(I - S_old^-1 S_t) M^-1]_ii - (r_i / s_i)^2,
        r = (I + S_t D)^-1 m.

    ``form="printed"`` is the closed form

        dL/ds_i = [M^-1]_ii (1 - [S_t]_ii / s_old_i) - q_i^2,   q = A m,

    which agrees with the exact one only when ``m = 0`` and ``S_t`` is
    diagonal (or at ``D = 0`` for the first term). It is kept for
    comparison runs.

    Both are multiplied by the softplus derivative, evaluated from ``s``.
    """
    s = ws.s_new
    Minv = np.linalg.inv(ws.M)
    if form == "exact":
        cross = np.einsum("ik,ki->i", ws.S_t, Minv) / ws.s_old
        ds = np.diag(Minv) - cross - (ws.r / s) ** 2
    elif form == "printed":
        ds = np.diag(Minv) * (1.0 - np.diag(ws.S_t) / ws.s_old) - ws.q ** 2
    else:
        raise ValueError(f"unknown gradient form {form!r}")
    if s_tilde is None:
        sig = softplus_grad_from_value(s)
    else:
        sig = 1.0 / (1.0 + np.exp(-np.asarray(s_tilde, dtype=float)))
    return sig * ds


@dataclass(frozen=True)
class ArdEngine:
    """Hyperparameter state for one identification run.

    ``S0_old_diag`` is the prior the current posterior was computed with; it
    stays frozen while :func:`ard_step` iterates and is replaced once the
    posterior has been refreshed.
    """

    s_tilde: np.ndarray
    S0_old_diag: np.ndarray
    eta_hp: float = DEFAULT_ETA_HP
    N_hp: int = DEFAULT_N_HP
    variance_floor: float = DEFAULT_VARIANCE_FLOOR
    gradient_form: str = "exact"
    rejected: bool = False
    losses: tuple = ()

    @classmethod
    def from_variances(cls, s0, **kwargs) -> "ArdEngine":
        s0 = np.asarray(s0, dtype=float).copy()
        return cls(s_tilde=softplus_inv(s0), S0_old_diag=s0, **kwargs)

    def __post_init__(self):
        if self.variance_floor <= 0:
            raise ValueError("variance_floor must be positive")
        if self.eta_hp < 0 or self.N_hp < 0:
            raise ValueError("eta_hp and N_hp must be non-negative")

    @property
    def s(self) -> np.ndarray:
        return np.maximum(softplus(self.s_tilde), self.variance_floor)


def _clamp(s_tilde, floor):
    s = softplus(s_tilde)
    low = s < floor
    if np.any(low):
        s_tilde = s_tilde.copy()
        s_tilde[low] = softplus_inv(floor)
    return s_tilde


def ard_step(engine: ArdEngine, m_old, S_old_marg) -> ArdEngine:
    """Run ``N_hp`` gradient steps ``s_tilde -= eta_hp * grad``.

    A candidate whose loss cannot be evaluated (``SingularM``) ends the loop
    and the last accepted iterate is kept. If not a single candidate is
    accepted the engine comes back unchanged with ``rejected=True``.
    The recorded ``losses`` hold the loss at the start and after each
    accepted iterate.
    """
    if engine.eta_hp == 0.0 or engine.N_hp == 0:
        return replace(engine, rejected=False, losses=())
    s_old = engine.S0_old_diag
    s_tilde = engine.s_tilde
    loss, ws = ard_loss(m_old, S_old_marg, s_old, engine.s)
    losses = [loss]
    accepted = 0
    for _ in range(engine.N_hp):
        grad = ard_gradient(ws, s_tilde, form=engine.gradient_form)
        cand = _clamp(s_tilde - engine.eta_hp * grad, engine.variance_floor)
        try:
            loss, ws = ard_loss(m_old, S_old_marg, s_old, softplus(cand))
        except SingularM:
            break
        s_tilde = cand
        losses.append(loss)
        accepted += 1
    if accepted == 0:
        return replace(engine, rejected=True, losses=tuple(losses))
    return replace(engine, s_tilde=s_tilde, rejected=False, losses=tuple(losses))


@dataclass(frozen=True)
class PseudoObservation:
    """Zero-valued observation of the parameter block, noise ``dS`` implicit in ``D``."""

    Hp: np.ndarray
    y_tilde: np.ndarray
    D_diag: np.ndarray

    @classmethod
    def build(cls, dims: Dims, s0_old, s0_new) -> "PseudoObservation":
        Hp = np.hstack([np.zeros((dims.d_theta, dims.d_x)), np.eye(dims.d_theta)])
        D = 1.0 / np.asarray(s0_new, dtype=float) - 1.0 / np.asarray(s0_old, dtype=float)
        return cls(Hp=Hp, y_tilde=np.zeros(dims.d_theta), D_diag=D)


@dataclass(frozen=True)
class RefreshResult:
    belief: GaussianBelief
    repaired: bool


def refresh_gain(Sigma, d_x: int, D):
    """``G = Sigma Hp^T (I + D S_t)^-1 D``."""
    S_t = Sigma[d_x:, d_x:]
    n = S_t.shape[0]
    B = np.eye(n) + D[:, None] * S_t
    return Sigma[:, d_x:] @ np.linalg.solve(B, np.diag(D))


def posterior_refresh(belief: GaussianBelief, dims: Dims, s0_old, s0_new) -> RefreshResult:
    """Re-weight the posterior from prior ``s0_old`` to prior ``s0_new``.

    ``xi_new = xi - G m`` and ``Sigma_new = Sigma - G Hp Sigma``. The result
    is symmetrized and refactored; if that fails, eigenvalues are floored at
    ``1e-10`` and the repair is reported.

    Raises:
        NotPositiveDefinite: if the repaired covariance still cannot be
            factored.
    """
    s0_old = np.asarray(s0_old, dtype=float)
    s0_new = np.asarray(s0_new, dtype=float)
    D = 1.0 / s0_new - 1.0 / s0_old
    if not np.any(D):
        return RefreshResult(belief=belief, repaired=False)
    d_x = dims.d_x
    Sigma = belief.U @ belief.U.T
    G = refresh_gain(Sigma, d_x, D)
    xi = belief.xi - G @ belief.xi[d_x:]
    Sigma = Sigma - G @ Sigma[d_x:, :]
    Sigma = 0.5 * (Sigma + Sigma.T)
    try:
        return RefreshResult(GaussianBelief(xi=xi, U=cholesky_factor(Sigma)), False)
    except NotPositiveDefinite:
        pass
    w, V = np.linalg.eigh(Sigma)
    if not np.all(np.isfinite(w)):
        raise NotPositiveDefinite("refreshed covariance is not finite")
    floor = REPAIR_EIG_FLOOR * max(1.0, float(np.max(np.abs(w))))
    Sigma = (V * np.maximum(w, floor)) @ V.T
    Sigma = 0.5 * (Sigma + Sigma.T)
    return RefreshResult(GaussianBelief(xi=xi, U=cholesky_factor(Sigma)), True)


def selected_mask(s, threshold: float = DEFAULT_REPORT_THRESHOLD):
    """Bases whose prior variance is at least ``threshold`` times the largest."""
    s = np.asarray(s, dtype=float)
    return s >= threshold * np.max(s)
