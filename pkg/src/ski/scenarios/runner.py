"""Drive the online filters (and the batch baseline) over a scenario run."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .. import ard as ard_mod
from ..ard import ArdEngine, ard_step, posterior_refresh, selected_mask
from ..errors import SkiError
from ..filters import (
    DenseBelief,
    ekf_correct,
    ekf_predict,
    srukf_correct,
    srukf_predict,
    ut_weights,
)
from ..model import initial_belief
from ..sindy import SindyProblem, sindy_identify
from .base import FilterSettings, Trajectory

log = logging.getLogger(__name__)

METHODS = ("ski", "ukf", "ekf", "sindy")
WARMUP_TICKS = 10


@dataclass(frozen=True)
class ArdSettings:
    eta_hp: float = ard_mod.DEFAULT_ETA_HP
    N_hp: int = ard_mod.DEFAULT_N_HP
    variance_floor: float = ard_mod.DEFAULT_VARIANCE_FLOOR
    report_threshold: float = ard_mod.DEFAULT_REPORT_THRESHOLD
    gradient_form: str = "exact"


@dataclass
class RunTrace:
    """Per-tick record of one run.

    ``est``, ``ci`` and ``prior`` are ``(N, d_theta)``: parameter means,
    1.96-sigma half widths and ARD prior variances. ``step_ms`` holds the
    wall-clock cost of each tick and is kept out of the deterministic CSV.
    """

    t: np.ndarray
    y: np.ndarray
    u: np.ndarray
    est: np.ndarray
    ci: np.ndarray
    prior: np.ndarray
    step_ms: np.ndarray
    param_names: tuple
    output_names: tuple
    input_names: tuple

    def header(self) -> list:
        cols = ["t", *self.output_names, *self.input_names]
        cols += [f"est[{n}]" for n in self.param_names]
        cols += [f"ci95[{n}]" for n in self.param_names]
        cols += [f"prior[{n}]" for n in self.param_names]
        return cols

    def rows(self):
        for k in range(self.t.size):
            yield [self.t[k], *self.y[k], *self.u[k], *self.est[k], *self.ci[k], *self.prior[k]]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for row in self.rows():
                writer.writerow([repr(float(v)) for v in row])

    def timing_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "step_ms"])
            for t, ms in zip(self.t, self.step_ms):
                writer.writerow([repr(float(t)), repr(float(ms))])

    def truncated(self, n: int) -> "RunTrace":
        return replace(
            self, t=self.t[:n], y=self.y[:n], u=self.u[:n], est=self.est[:n],
            ci=self.ci[:n], prior=self.prior[:n], step_ms=self.step_ms[:n],
        )


@dataclass
class RunMetrics:
    method: str
    scenario: str
    seed: int
    mean_l1_error: float | None
    l1_relative_error_L: float | None
    per_step_ms: float | None
    selected_basis: list
    selected_labels: list
    final_estimate: list
    final_prior: list | None
    failed: bool = False
    error: str | None = None
    active_gain_relative_error: float | None = None
    refresh_repairs: int = 0
    rejected_steps: int = 0
    ard_iterations: int = 0
    ard_ascents: int = 0

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def _metrics(scenario, method, seed, est, prior, step_ms, param_names,
             threshold, failed=False, error=None, **extra) -> RunMetrics:
    truth = np.asarray(scenario.true_params, dtype=float)
    err = mean_l1 = rel_L = active = None
    if est is not None and np.all(np.isfinite(est)):
        err = np.abs(est - truth)
        mean_l1 = float(np.mean(err))
        delay = getattr(scenario, "delay", None)
        if delay is not None:
            rel_L = float(np.sum(err) / np.sum(np.abs(truth)))
            j = delay.true_delay_steps
            active = float(err[j] / abs(truth[j]))
    if prior is not None and method == "ski":
        mask = selected_mask(prior, threshold)
    elif method == "sindy" and est is not None:
        mask = np.abs(est) > 0
    else:
        mask = np.ones(len(param_names), dtype=bool)
    idx = [int(i) for i in np.flatnonzero(mask)]
    steady = step_ms[WARMUP_TICKS:] if step_ms is not None else None
    per_step = float(np.mean(steady)) if steady is not None and steady.size else None
    return RunMetrics(
        method=method, scenario=scenario.name, seed=int(seed),
        mean_l1_error=mean_l1, l1_relative_error_L=rel_L, per_step_ms=per_step,
        selected_basis=idx, selected_labels=[param_names[i] for i in idx],
        final_estimate=[] if est is None else [float(v) for v in est],
        final_prior=None if prior is None else [float(v) for v in prior],
        failed=failed, error=error, active_gain_relative_error=active, **extra,
    )


def run_online(scenario, traj: Trajectory, method: str,
               settings: FilterSettings = FilterSettings(),
               ard_settings: ArdSettings = ArdSettings()):
    """Tick-by-tick joint estimation.

    Tick ``k >= 1``: predict with ``u[k-1]``, correct with ``y[k]``; for
    ``ski`` follow with ``N_hp`` ARD steps and one posterior refresh. The
    initial belief is centred on the lifted first measurement.

    Returns:
        ``(trace, error, counters)``; ``error`` is the message of a filter
        failure (the trace then stops at the last good tick).
    """
    if method not in ("ski", "ukf", "ekf"):
        raise ValueError(f"not an online method: {method}")
    model = scenario.model(settings)
    dims = model.dims
    d_x, d_th = dims.d_x, dims.d_theta
    n = len(traj)
    s0 = np.full(d_th, settings.s0)
    belief = initial_belief(
        scenario.lift(traj.y[0]), settings.p0 * np.eye(d_x), np.zeros(d_th), s0
    )
    weights = ut_weights(dims.L_sigma, settings.alpha, settings.beta)
    noise = model.noise_factors()
    engine = None
    if method == "ski":
        engine = ArdEngine.from_variances(
            s0, eta_hp=ard_settings.eta_hp, N_hp=ard_settings.N_hp,
            variance_floor=ard_settings.variance_floor,
            gradient_form=ard_settings.gradient_form,
        )
    if method == "ekf":
        belief = DenseBelief.from_belief(belief)

    est = np.full((n, d_th), np.nan)
    ci = np.full((n, d_th), np.nan)
    prior = np.full((n, d_th), np.nan)
    step_ms = np.full(n, np.nan)
    counters = {"refresh_repairs": 0, "rejected_steps": 0, "ard_iterations": 0, "ard_ascents": 0}
    error = None
    done = 0
    for k in range(n):
        t0 = time.perf_counter()
        try:
            if k > 0:
                if method == "ekf":
                    belief = ekf_predict(belief, traj.u[k - 1], model)
                    belief = ekf_correct(belief, traj.y[k], model)
                else:
                    belief = srukf_predict(belief, traj.u[k - 1], model, weights, noise)
                    belief = srukf_correct(belief, traj.y[k], model, weights, noise)
                if engine is not None:
                    Sigma = belief.U @ belief.U.T
                    S_t = Sigma[d_x:, d_x:]
                    engine = ard_step(engine, belief.xi[d_x:], 0.5 * (S_t + S_t.T))
                    steps = np.diff(engine.losses)
                    counters["ard_iterations"] += steps.size
                    counters["ard_ascents"] += int(np.sum(steps > 0))
                    if engine.rejected:
                        counters["rejected_steps"] += 1
                    else:
                        s_new = engine.s
                        res = posterior_refresh(belief, dims, engine.S0_old_diag, s_new)
                        belief = res.belief
                        counters["refresh_repairs"] += int(res.repaired)
                        engine = replace(engine, S0_old_diag=s_new)
        except SkiError as exc:
            error = f"{type(exc).__name__} at t={traj.t[k]:.3f}s: {exc}"
            log.warning("%s run halted: %s", method, error)
            break
        step_ms[k] = 1e3 * (time.perf_counter() - t0)
        cov_diag = np.diag(belief.cov)[d_x:]
        est[k] = belief.xi[d_x:]
        ci[k] = 1.96 * np.sqrt(np.maximum(cov_diag, 0.0))
        prior[k] = engine.S0_old_diag if engine is not None else s0
        done = k + 1
    trace = _make_trace(scenario, traj, est, ci, prior, step_ms).truncated(done)
    return trace, error, counters


def _make_trace(scenario, traj, est, ci, prior, step_ms) -> RunTrace:
    return RunTrace(
        t=traj.t, y=traj.y, u=traj.u, est=est, ci=ci, prior=prior, step_ms=step_ms,
        param_names=tuple(scenario.param_names),
        output_names=tuple(scenario.output_names),
        input_names=tuple(scenario.input_names),
    )


def run_sindy(scenario, traj: Trajectory, lam: float):
    Psi, target = scenario.sindy_regression(traj)
    problem = SindyProblem(
        X=traj.y, U=traj.u, Xdot=target[:, None], Psi=Psi, lam=lam,
    )
    coef = sindy_identify(problem)[:, 0]
    n, d = len(traj), len(scenario.param_names)
    est = np.full((n, d), np.nan)
    est[-1] = coef
    trace = _make_trace(
        scenario, traj, est, np.full((n, d), np.nan), np.full((n, d), np.nan),
        np.full(n, np.nan),
    )
    return trace, coef


def run_identification(scenario, method: str, seed: int,
                       settings: FilterSettings = FilterSettings(),
                       ard_settings: ArdSettings = ArdSettings(),
                       sindy_lambda: float = 0.1):
    """Simulate ``scenario`` with ``seed`` and identify it with ``method``.

    Filter failures do not raise: the metrics come back with
    ``failed=True`` and the trace stops at the failing tick.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    traj = scenario.simulate(seed)
    names = tuple(scenario.param_names)
    if method == "sindy":
        trace, coef = run_sindy(scenario, traj, sindy_lambda)
        return trace, _metrics(scenario, method, seed, coef, None, None, names,
                               ard_settings.report_threshold)
    trace, error, counters = run_online(scenario, traj, method, settings, ard_settings)
    failed = error is not None
    est = trace.est[-1] if len(trace.t) and not failed else None
    prior = trace.prior[-1] if len(trace.t) and method == "ski" and not failed else None
    metrics = _metrics(
        scenario, method, seed, est, prior, trace.step_ms, names,
        ard_settings.report_threshold, failed=failed, error=error, **counters,
    )
    return trace, metrics
