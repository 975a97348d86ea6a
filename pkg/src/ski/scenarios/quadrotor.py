"""Quadrotor point-mass simulator with polynomial thrust and speed drag.

World-frame translational dynamics::

    p' = v
    v' = R(q) [0, 0, a_thrust] + a_drag(v) + [0, 0, -g]
    a_thrust = sum_i w_i pwm^i           (i = 0..5)
    a_drag   = -d1 v - d2 |v| v

``pwm`` is the average motor command after centring on hover and scaling
to unit spread, so ``w_0`` is the hover acceleration. Attitude and PWM come
from a geometric tracking controller and are treated as known inputs; only
position is measured.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import Diverged
from ..model import BasisLibrary, Dims, ParametricModel
from .base import FilterSettings, Trajectory
from .control import INTEGRATORS

GRAVITY = 9.81
PWM_DEGREE = 5
QUAD_LABELS = tuple(f"pwm^{i}" for i in range(PWM_DEGREE + 1)) + ("|v|", "|v|^2")
QUADZ_LABELS = QUAD_LABELS[: PWM_DEGREE + 1]
DIVERGENCE_LIMIT = 1e4


def thrust_axis(q):
    """Third column of the body-to-world rotation of quaternion(s)
    ``q = [w, x, y, z]`` (leading axis)."""
    qw, qx, qy, qz = np.asarray(q, dtype=float)
    return np.stack([
        2.0 * (qx * qz + qw * qy),
        2.0 * (qy * qz - qw * qx),
        1.0 - 2.0 * (qx * qx + qy * qy),
    ])


def quat_from_axis(b3):
    """Zero-yaw unit quaternion rotating ``e3`` onto the unit vector ``b3``."""
    b3 = np.asarray(b3, dtype=float)
    q = np.array([1.0 + b3[2], -b3[1], b3[0], 0.0])
    n = np.linalg.norm(q)
    if n < 1e-9:
        raise Diverged("commanded thrust points straight down")
    return q / n


def pwm_powers(pwm):
    pwm = np.asarray(pwm, dtype=float)
    return np.stack([pwm ** i for i in range(PWM_DEGREE + 1)])


@dataclass(frozen=True)
class QuadTruth:
    w: tuple = (GRAVITY, 2.0, 0.0, 0.0, 0.0, 0.0)
    d1: float = 0.4
    d2: float = 0.0
    g: float = GRAVITY
    meas_noise_std: float = 0.02
    rate: float = 50.0
    duration: float = 60.0


@dataclass(frozen=True)
class SpiralReference:
    """Spiral climb: radius grows linearly, revolution period fixed, plus a
    vertical sinusoid that keeps the thrust command moving."""

    r0: float = 1.0
    r_rate: float = 0.1
    period: float = 10.0
    climb: float = 0.05
    z_amp: float = 0.5
    z_period: float = 3.0

    def __call__(self, t):
        """Position, velocity and acceleration, each ``(3, n)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        om = 2 * np.pi / self.period
        oz = 2 * np.pi / self.z_period
        r = self.r0 + self.r_rate * t
        c, s = np.cos(om * t), np.sin(om * t)
        pos = np.stack([r * c, r * s,
                        self.climb * t + self.z_amp * np.sin(oz * t)])
        vel = np.stack([
            (self.r_rate * c - r * om * s),
            (self.r_rate * s + r * om * c),
            self.climb + self.z_amp * oz * np.cos(oz * t),
        ])
        acc = np.stack([
            (-2 * self.r_rate * om * s - r * om ** 2 * c),
            (2 * self.r_rate * om * c - r * om ** 2 * s),
            -self.z_amp * oz ** 2 * np.sin(oz * t),
        ])
        return pos, vel, acc


@dataclass(frozen=True)
class TrackingGains:
    kp: float = 4.0
    kd: float = 3.0
    tilt_max_deg: float = 35.0


@dataclass(frozen=True)
class QuadrotorScenario:
    """3-D spiral (``axis="xyz"``) or the vertical-only variant (``axis="z"``).

    Inputs per tick: ``[pwm, qw, qx, qy, qz]`` (``[pwm]`` for the vertical
    variant). The controller inverts the nominal thrust map ``w_0 + w_1 pwm``
    and ignores drag, leaving the remainder to its PD terms.
    """

    truth: QuadTruth = QuadTruth()
    reference: SpiralReference = SpiralReference()
    gains: TrackingGains = TrackingGains()
    axis: str = "xyz"
    integrator: str = "rk4"
    pwm_dither_std: float = 0.05
    name: str = "quadrotor"

    def __post_init__(self):
        if self.axis not in ("xyz", "z"):
            raise ValueError(f"axis must be 'xyz' or 'z', got {self.axis!r}")

    @property
    def dt(self) -> float:
        return 1.0 / self.truth.rate

    @property
    def n_samples(self) -> int:
        return int(round(self.truth.duration * self.truth.rate))

    @property
    def planar(self) -> bool:
        return self.axis == "xyz"

    @property
    def param_names(self) -> tuple:
        return QUAD_LABELS if self.planar else QUADZ_LABELS

    @property
    def true_params(self) -> np.ndarray:
        w = list(self.truth.w)
        if self.planar:
            w += [self.truth.d1, self.truth.d2]
        return np.asarray(w, dtype=float)

    @property
    def input_names(self) -> tuple:
        return ("pwm", "qw", "qx", "qy", "qz") if self.planar else ("pwm",)

    @property
    def state_names(self) -> tuple:
        if self.planar:
            return ("px", "py", "pz", "vx", "vy", "vz")
        return ("pz", "vz")

    @property
    def output_names(self) -> tuple:
        return tuple(f"{n}_meas" for n in self.state_names[: len(self.state_names) // 2])

    # -- plant ----------------------------------------------------------
    def _accel(self, v, pwm, b3):
        tr = self.truth
        thrust = np.asarray(tr.w) @ pwm_powers(pwm)
        drag = -(tr.d1 + tr.d2 * np.linalg.norm(v)) * v
        return b3 * thrust + drag + np.array([0.0, 0.0, -tr.g])

    def _command(self, t, pos, vel, rng):
        tr, gn = self.truth, self.gains
        p_ref, v_ref, a_ref = (c[:, 0] for c in self.reference(t))
        if not self.planar:
            p_ref, v_ref, a_ref = (np.r_[0.0, 0.0, c[2]] for c in (p_ref, v_ref, a_ref))
        a_des = a_ref + gn.kp * (p_ref - pos) + gn.kd * (v_ref - vel)
        T = a_des + np.array([0.0, 0.0, tr.g])
        if not self.planar:
            T[:2] = 0.0
        horiz = np.linalg.norm(T[:2])
        max_h = np.tan(np.radians(gn.tilt_max_deg)) * max(T[2], 0.1)
        if horiz > max_h:
            T[:2] *= max_h / horiz
        T[2] = max(T[2], 0.1)
        q = quat_from_axis(T / np.linalg.norm(T))
        pwm = (np.linalg.norm(T) - tr.w[0]) / tr.w[1]
        if self.pwm_dither_std > 0:
            pwm += self.pwm_dither_std * rng.standard_normal()
        return pwm, q

    def simulate(self, seed: int) -> Trajectory:
        """Fly the reference; noise enters through position measurements and
        the PWM dither.

        Raises:
            Diverged: if the position leaves a 1e4 m box.
        """
        rng = np.random.default_rng(seed)
        dt, n = self.dt, self.n_samples
        step = INTEGRATORS[self.integrator]
        t = np.arange(n) * dt
        p0, v0, _ = (c[:, 0] for c in self.reference(0.0))
        if not self.planar:
            p0, v0 = np.r_[0.0, 0.0, p0[2]], np.r_[0.0, 0.0, v0[2]]
        x = np.concatenate([p0, v0])
        d = 3 if self.planar else 1
        X = np.zeros((n, 2 * d))
        Y = np.zeros((n, d))
        U = np.zeros((n, 5 if self.planar else 1))
        for k in range(n):
            X[k] = x[[0, 1, 2, 3, 4, 5]] if self.planar else x[[2, 5]]
            Y[k] = X[k, :d] + self.truth.meas_noise_std * rng.standard_normal(d)
            pwm, q = self._command(t[k], x[:3], x[3:], rng)
            b3 = thrust_axis(q)
            U[k] = np.r_[pwm, q] if self.planar else pwm

            def f(s, pwm=pwm, b3=b3):
                return np.concatenate([s[3:], self._accel(s[3:], pwm, b3)])

            x = step(f, x, dt)
            if not np.all(np.isfinite(x)) or np.abs(x[:3]).max() > DIVERGENCE_LIMIT:
                raise Diverged(f"position left the envelope at t={t[k]:.2f}s")
        return Trajectory(t=t, u=U, y=Y, x=X)

    # -- filter model ---------------------------------------------------
    def model(self, settings: FilterSettings = FilterSettings()) -> ParametricModel:
        dt = self.dt
        g = self.truth.g
        r_std = settings.r_std if settings.r_std is not None else self.truth.meas_noise_std
        d = 3 if self.planar else 1
        Q = settings.q_scale * np.eye(2 * d)
        R = r_std ** 2 * np.eye(d)

        if self.planar:
            def evaluate(X, u):
                n = X.shape[1]
                v = X[3:]
                b3 = thrust_axis(u[1:5])[:, None]
                powers = pwm_powers(u[0])[:, None, None] * b3[None]
                speed = np.linalg.norm(v, axis=0)
                drag = np.stack([-v, -speed * v])
                return np.concatenate([np.broadcast_to(powers, (6, 3, n)), drag])

            gvec = np.array([0.0, 0.0, -g])[:, None]

            def transition(X, u, f):
                return np.concatenate([X[:3] + dt * X[3:], X[3:] + dt * (f + gvec)])
        else:
            def evaluate(X, u):
                return np.repeat(pwm_powers(u[0])[:, None], X.shape[1], axis=1)

            def transition(X, u, f):
                return np.stack([X[0] + dt * X[1], X[1] + dt * (f[0] - g)])

        basis = BasisLibrary(self.param_names, evaluate)
        dims = Dims(d_x=2 * d, d_u=len(self.input_names), d_y=d,
                    d_theta=len(self.param_names), d_f=d)

        def observe(X):
            return X[:d]

        return ParametricModel(
            dims=dims, basis=basis, transition=transition, observe=observe,
            dt=dt, Q=Q, R=R, state_names=self.state_names,
        )

    def lift(self, y0) -> np.ndarray:
        y0 = np.asarray(y0, dtype=float).reshape(-1)
        return np.concatenate([y0, np.zeros_like(y0)])

    # -- batch baseline ---------------------------------------------------
    def sindy_regression(self, traj: Trajectory):
        """Stacked per-axis regression of the measured acceleration (twice
        differentiated position) minus gravity on the basis."""
        from ..sindy import numeric_derivative

        vel = numeric_derivative(traj.y, self.dt)
        acc = numeric_derivative(vel, self.dt)
        acc[:, -1] += self.truth.g
        model = self.model()
        rows = []
        for k in range(len(traj)):
            X = np.concatenate([traj.y[k], vel[k]])[:, None]
            rows.append(model.basis(X, traj.u[k])[:, :, 0].T)
        Psi = np.concatenate(rows, axis=0)
        return Psi, acc.reshape(-1)
