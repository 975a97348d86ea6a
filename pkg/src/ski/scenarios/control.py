"""Controllers and reference generators for the closed-loop scenarios."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class PidController:
    """Discrete PID with derivative on measurement and conditional integration.

    Output is clamped to ``[-limit, limit]``; the integrator freezes while the
    output is saturated in the direction of the error.
    """

    kp: float
    ki: float
    kd: float
    dt: float
    limit: float = np.inf
    integral: float = field(default=0.0, init=False)
    _last_meas: float | None = field(default=None, init=False)

    def reset(self):
        self.integral = 0.0
        self._last_meas = None

    def __call__(self, setpoint: float, measurement: float) -> float:
        err = setpoint - measurement
        if self._last_meas is None:
            deriv = 0.0
        else:
            deriv = -(measurement - self._last_meas) / self.dt
        self._last_meas = measurement
        integral = self.integral + err * self.dt
        out = self.kp * err + self.ki * integral + self.kd * deriv
        clamped = float(np.clip(out, -self.limit, self.limit))
        if clamped == out or np.sign(err) != np.sign(out):
            self.integral = integral
        return clamped


def square_wave(t, levels, hold: float):
    """Piecewise-constant reference visiting ``levels`` for ``hold`` seconds
    each, cycling."""
    levels = np.asarray(levels, dtype=float)
    idx = (np.asarray(t) // hold).astype(int) % levels.size
    return levels[idx]


def rk4_step(f, x, dt):
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def euler_step(f, x, dt):
    return x + dt * f(x)


INTEGRATORS = {"rk4": rk4_step, "euler": euler_step}
