"""Parametric identification problems and Gaussian beliefs over the
augmented state ``[x; theta]``.

Model callables are vectorized over columns: a batch of ``n`` states is a
``(d_x, n)`` array. The input ``u`` is shared by the whole batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NonFinite, NotPositiveDefinite
from .matkernels import cholesky_factor


@dataclass(frozen=True)
class Dims:
    d_x: int
    d_u: int
    d_y: int
    d_theta: int
    d_f: int = 1

    def __post_init__(self):
        for name in ("d_y", "d_theta", "d_f"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.d_x < 0 or self.d_u < 0:
            raise ValueError("d_x and d_u must be >= 0")

    @property
    def L_sigma(self) -> int:
        return self.d_x + self.d_theta


@dataclass(frozen=True)
class BasisLibrary:
    """Named candidate functions.

    ``evaluate(X, u)`` takes a ``(d_x, n)`` batch and returns either a
    ``(d_theta, n)`` array (scalar unknown term) or ``(d_theta, d_f, n)``.
    """

    names: tuple
    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def size(self) -> int:
        return len(self.names)

    def __call__(self, X, u) -> np.ndarray:
        """Evaluate as a ``(d_theta, d_f, n)`` array."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        phi = np.asarray(self.evaluate(X, np.asarray(u, dtype=float)), dtype=float)
        if phi.ndim == 2:
            phi = phi[:, None, :]
        return phi


@dataclass(frozen=True)
class ParametricModel:
    """Discrete-time model ``x+ = F(x, u, Phi(x, u)^T theta)``, ``y = h(x)``.

    ``transition(X, u, f)`` maps a ``(d_x, n)`` batch and the unknown-term
    batch ``f`` of shape ``(d_f, n)`` to the next ``(d_x, n)`` batch;
    ``observe(X)`` returns ``(d_y, n)``. The unknown term is always the
    linear combination ``Phi^T theta``; there is no hook for other forms.
    """

    dims: Dims
    basis: BasisLibrary
    transition: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    observe: Callable[[np.ndarray], np.ndarray]
    dt: float
    Q: np.ndarray
    R: np.ndarray
    state_names: tuple = ()
    jacobian: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        d = self.dims
        if self.basis.size != d.d_theta:
            raise ValueError(
                f"basis has {self.basis.size} functions, dims say {d.d_theta}"
            )
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if Q.shape != (d.d_x, d.d_x) or R.shape != (d.d_y, d.d_y):
            raise ValueError("noise covariance shapes do not match dims")
        if not np.allclose(Q, Q.T) or not np.allclose(R, R.T):
            raise ValueError("Q and R must be symmetric")
        if np.min(np.linalg.eigvalsh(Q)) < -1e-12:
            raise ValueError("Q must be positive semi-definite")
        cholesky_factor(R)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if not self.state_names:
            object.__setattr__(
                self, "state_names", tuple(f"x{i}" for i in range(d.d_x))
            )
        probe = self.basis(np.zeros((d.d_x, 1)), np.zeros(d.d_u))
        if probe.shape != (d.d_theta, d.d_f, 1):
            raise ValueError(
                f"basis output shape {probe.shape} != {(d.d_theta, d.d_f, 1)}"
            )

    @property
    def param_names(self) -> tuple:
        return self.basis.names

    def noise_factors(self) -> "NoiseFactors":
        return NoiseFactors.from_model(self)


@dataclass(frozen=True)
class NoiseFactors:
    """Cholesky factors of Q (zero-padded to the augmented size) and R."""

    Q_sqrt: np.ndarray
    R_sqrt: np.ndarray

    @classmethod
    def from_model(cls, model: ParametricModel) -> "NoiseFactors":
        d = model.dims
        Qs = np.zeros((d.L_sigma, d.L_sigma))
        if np.any(model.Q):
            Qs[: d.d_x, : d.d_x] = _psd_factor(model.Q)
        return cls(Q_sqrt=Qs, R_sqrt=cholesky_factor(model.R))


def _psd_factor(A):
    # Q may be singular (e.g. noise on a subset of states).
    try:
        return cholesky_factor(A)
    except NotPositiveDefinite:
        w, V = np.linalg.eigh(A)
        B = V * np.sqrt(np.clip(w, 0.0, None))
        return np.linalg.qr(B.T, mode="r").T


def augmented_transition(model: ParametricModel, xbar, u) -> np.ndarray:
    """Apply the augmented transition to one vector or a column batch.

    The parameter block is copied through unchanged.

    Raises:
        NonFinite: if the propagated state contains NaN or Inf.
    """
    xbar = np.asarray(xbar, dtype=float)
    single = xbar.ndim == 1
    Xb = xbar[:, None] if single else xbar
    d = model.dims
    X = Xb[: d.d_x]
    theta = Xb[d.d_x:]
    phi = model.basis(X, u)
    f = np.einsum("ifn,in->fn", phi, theta)
    X_next = np.asarray(model.transition(X, np.asarray(u, dtype=float), f), dtype=float)
    if not np.all(np.isfinite(X_next)):
        raise NonFinite("transition produced non-finite values")
    out = np.empty_like(Xb)
    out[: d.d_x] = X_next
    out[d.d_x:] = theta
    return out[:, 0] if single else out


def observe(model: ParametricModel, xbar) -> np.ndarray:
    xbar = np.asarray(xbar, dtype=float)
    single = xbar.ndim == 1
    Xb = xbar[:, None] if single else xbar
    Y = np.asarray(model.observe(Xb[: model.dims.d_x]), dtype=float)
    if Y.ndim == 1:
        Y = Y[None, :]
    return Y[:, 0] if single else Y


@dataclass(frozen=True)
class GaussianBelief:
    """Augmented mean ``xi`` and lower Cholesky factor ``U`` of its covariance."""

    xi: np.ndarray
    U: np.ndarray

    @property
    def cov(self) -> np.ndarray:
        return self.U @ self.U.T


def initial_belief(mu0, P0, m0, S0_diag) -> GaussianBelief:
    """Block-diagonal prior ``N([mu0; m0], diag(P0, diag(S0)))``."""
    mu0 = np.atleast_1d(np.asarray(mu0, dtype=float))
    m0 = np.atleast_1d(np.asarray(m0, dtype=float))
    S0 = np.atleast_1d(np.asarray(S0_diag, dtype=float))
    P0 = np.atleast_2d(np.asarray(P0, dtype=float))
    if np.any(S0 <= 0):
        raise ValueError("prior variances must be positive")
    if m0.shape != S0.shape or P0.shape != (mu0.size, mu0.size):
        raise ValueError("inconsistent initial-belief shapes")
    dx, dt = mu0.size, m0.size
    U = np.zeros((dx + dt, dx + dt))
    U[:dx, :dx] = cholesky_factor(P0)
    U[dx:, dx:] = np.diag(np.sqrt(S0))
    return GaussianBelief(xi=np.concatenate([mu0, m0]), U=U)


def belief_blocks(b: GaussianBelief, dims: Dims):
    """Return ``(mu, m, P, V, S)`` from the dense covariance."""
    dx = dims.d_x
    Sigma = b.U @ b.U.T
    S = Sigma[dx:, dx:]
    S = 0.5 * (S + S.T)
    return b.xi[:dx].copy(), b.xi[dx:].copy(), Sigma[:dx, :dx], Sigma[:dx, dx:], S
