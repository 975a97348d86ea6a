from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Trajectory:
    """Sampled closed-loop run: row ``k`` is time ``t[k]``.

    ``u[k]`` is the input applied over ``[t[k], t[k+1])`` and ``y[k]`` the
    noisy observation of ``x[k]``.
    """

    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    x: np.ndarray

    def __len__(self):
        return self.t.size


@dataclass(frozen=True)
class FilterSettings:
    """Filter-side assumptions shared by all online methods."""

    alpha: float = 1e-3
    beta: float = 2.0
    q_scale: float = 1e-4
    r_std: float | None = None
    p0: float = 1.0
    s0: float = 10.0
