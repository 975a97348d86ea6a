"""WingRock roll dynamics and its input-delay variant.

Continuous dynamics (angles in degrees)::

    theta' = p
    p'     = L * dd + Phi(theta, p) . w
    Phi    = [1, theta, p, |theta| p, |p| p, theta^3]

The plant is integrated with RK4 at the sample rate and flown by a PID on
the measured roll angle. The filter models use one explicit Euler step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import Diverged
from ..model import BasisLibrary, Dims, ParametricModel
from .base import FilterSettings, Trajectory
from .control import INTEGRATORS, PidController, square_wave

PAPER_WEIGHTS = (0.8, 0.2314, 0.6918, -0.6245, 0.0095, 0.0214)
WINGROCK_LABELS = ("1", "theta", "p", "|theta|p", "|p|p", "theta^3")
DIVERGENCE_LIMIT = 1e4


def wingrock_features(theta, p):
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(p, dtype=float)
    return np.stack(
        [np.ones_like(theta), theta, p, np.abs(theta) * p, np.abs(p) * p, theta ** 3]
    )


@dataclass(frozen=True)
class WingRockTruth:
    L_gain: float = 3.0
    w: tuple = PAPER_WEIGHTS
    meas_noise_std: float = 0.1
    rate: float = 50.0
    duration: float = 15.0


@dataclass(frozen=True)
class PidGains:
    kp: float = 5.0
    ki: float = 1.0
    kd: float = 0.5
    limit: float = 25.0


@dataclass(frozen=True)
class DelayTruth:
    window: int = 8
    true_delay_steps: int = 6
    gain: float = 3.0

    def __post_init__(self):
        if not 0 <= self.true_delay_steps < self.window:
            raise ValueError("window must cover the true delay")

    @property
    def Lbar(self) -> np.ndarray:
        out = np.zeros(self.window)
        out[self.true_delay_steps] = self.gain
        return out


@dataclass(frozen=True)
class WingRockScenario:
    """Closed-loop WingRock run.

    With ``delay`` set the plant applies the command ``delay.true_delay_steps``
    samples late, the known uncertainty ``Phi . w`` stays in the filter model
    and the unknowns become the gains on the last ``delay.window`` commands
    (basis ``j`` = command issued ``j`` samples ago).
    """

    truth: WingRockTruth = WingRockTruth()
    pid: PidGains = PidGains()
    levels: tuple = (5.0, -5.0)
    hold: float = 2.5
    integrator: str = "rk4"
    delay: DelayTruth | None = None
    dither_std: float = 0.0
    name: str = "wingrock"

    # -- geometry -------------------------------------------------------
    @property
    def dt(self) -> float:
        return 1.0 / self.truth.rate

    @property
    def n_samples(self) -> int:
        return int(round(self.truth.duration * self.truth.rate))

    @property
    def param_names(self) -> tuple:
        if self.delay is None:
            return WINGROCK_LABELS
        return tuple(f"delay{j}" for j in range(self.delay.window))

    @property
    def true_params(self) -> np.ndarray:
        if self.delay is None:
            return np.asarray(self.truth.w, dtype=float)
        return self.delay.Lbar

    @property
    def input_names(self) -> tuple:
        if self.delay is None:
            return ("dd",)
        return tuple(f"dd_lag{j}" for j in range(self.delay.window))

    state_names = ("theta", "p")
    output_names = ("theta_meas",)

    def reference(self, t):
        return square_wave(t, self.levels, self.hold)

    # -- plant ----------------------------------------------------------
    def simulate(self, seed: int) -> Trajectory:
        """Run the closed loop; noise enters only through the measurement
        and the optional command dither.

        Raises:
            Diverged: if ``|theta|`` exceeds 1e4 degrees.
        """
        rng = np.random.default_rng(seed)
        tr = self.truth
        dt = self.dt
        n = self.n_samples
        w = np.asarray(tr.w, dtype=float)
        step = INTEGRATORS[self.integrator]
        pid = PidController(self.pid.kp, self.pid.ki, self.pid.kd, dt, self.pid.limit)
        window = 1 if self.delay is None else self.delay.window
        lag = 0 if self.delay is None else self.delay.true_delay_steps
        gain = tr.L_gain if self.delay is None else self.delay.gain
        history = np.zeros(window)
        t = np.arange(n) * dt
        ref = self.reference(t)
        X = np.zeros((n, 2))
        Y = np.zeros((n, 1))
        U = np.zeros((n, window))
        x = np.zeros(2)
        for k in range(n):
            X[k] = x
            y = x[0] + tr.meas_noise_std * rng.standard_normal()
            Y[k, 0] = y
            cmd = pid(ref[k], y)
            if self.dither_std > 0:
                cmd += self.dither_std * rng.standard_normal()
            history = np.roll(history, 1)
            history[0] = cmd
            U[k] = history
            applied = history[lag]

            def f(s, applied=applied):
                return np.array([s[1], gain * applied + wingrock_features(s[0], s[1]) @ w])

            x = step(f, x, dt)
            if not np.all(np.isfinite(x)) or abs(x[0]) > DIVERGENCE_LIMIT:
                raise Diverged(f"|theta| left the envelope at t={t[k]:.2f}s")
        return Trajectory(t=t, u=U, y=Y, x=X)

    # -- filter model ---------------------------------------------------
    def model(self, settings: FilterSettings = FilterSettings()) -> ParametricModel:
        dt = self.dt
        r_std = settings.r_std if settings.r_std is not None else self.truth.meas_noise_std
        Q = settings.q_scale * np.eye(2)
        R = np.array([[r_std ** 2]])

        def observe(X):
            return X[:1]

        if self.delay is None:
            gain = self.truth.L_gain
            basis = BasisLibrary(WINGROCK_LABELS, lambda X, u: wingrock_features(X[0], X[1]))

            def transition(X, u, f):
                return np.stack([X[0] + dt * X[1], X[1] + dt * (gain * u[0] + f[0])])

            dims = Dims(d_x=2, d_u=1, d_y=1, d_theta=6)
        else:
            w = np.asarray(self.truth.w, dtype=float)
            window = self.delay.window
            basis = BasisLibrary(
                self.param_names,
                lambda X, u: np.repeat(np.asarray(u, dtype=float)[:, None], X.shape[1], axis=1),
            )

            def transition(X, u, f):
                known = w @ wingrock_features(X[0], X[1])
                return np.stack([X[0] + dt * X[1], X[1] + dt * (f[0] + known)])

            dims = Dims(d_x=2, d_u=window, d_y=1, d_theta=window)
        return ParametricModel(
            dims=dims, basis=basis, transition=transition, observe=observe,
            dt=dt, Q=Q, R=R, state_names=self.state_names,
        )

    def lift(self, y0) -> np.ndarray:
        """Initial state mean from the first measurement."""
        return np.array([float(np.asarray(y0).reshape(-1)[0]), 0.0])

    # -- batch baseline ---------------------------------------------------
    def sindy_regression(self, traj: Trajectory):
        """Library matrix and target for the roll-acceleration equation.

        Roll rate and acceleration come from repeated numerical
        differentiation of the measured angle.
        """
        from ..sindy import numeric_derivative

        theta = traj.y[:, 0]
        p = numeric_derivative(theta, self.dt)
        pdot = numeric_derivative(p, self.dt)
        if self.delay is None:
            Psi = wingrock_features(theta, p).T
            target = pdot - self.truth.L_gain * traj.u[:, 0]
        else:
            w = np.asarray(self.truth.w, dtype=float)
            Psi = traj.u.copy()
            target = pdot - w @ wingrock_features(theta, p)
        return Psi, target
