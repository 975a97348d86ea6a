from dataclasses import replace

import numpy as np
import pytest

from ski.errors import Diverged
from ski.model import augmented_transition
from ski.scenarios import (
    DelayTruth,
    FilterSettings,
    PidGains,
    QuadrotorScenario,
    QuadTruth,
    SpiralReference,
    WingRockScenario,
    WingRockTruth,
)
from ski.scenarios.control import PidController, rk4_step, square_wave
from ski.scenarios.quadrotor import pwm_powers, quat_from_axis, thrust_axis
from ski.scenarios.runner import ArdSettings, run_identification
from ski.scenarios.wingrock import PAPER_WEIGHTS, wingrock_features
from oracles import wingrock_euler_step

PRESET_ARD = ArdSettings(eta_hp=0.3, N_hp=5, variance_floor=1e-8, report_threshold=1e-4)


def short(sc, seconds):
    return replace(sc, truth=replace(sc.truth, duration=seconds))


# -- controllers --------------------------------------------------------------------

def test_square_wave_levels():
    t = np.array([0.0, 2.4, 2.5, 4.9, 5.0])
    np.testing.assert_array_equal(square_wave(t, (5.0, -5.0), 2.5), [5, 5, -5, -5, 5])


def test_pid_clamps_output():
    pid = PidController(100.0, 0.0, 0.0, 0.02, limit=25.0)
    assert pid(10.0, 0.0) == 25.0
    assert pid(-10.0, 0.0) == -25.0


def test_rk4_exact_for_cubic_polynomial_in_time():
    # x' = 3 t^2 written autonomously on (x, t)
    out = rk4_step(lambda s: np.array([3 * s[1] ** 2, 1.0]), np.array([0.0, 0.0]), 0.5)
    assert out[0] == pytest.approx(0.125, abs=1e-15)


# -- WingRock -----------------------------------------------------------------------

def test_wingrock_zero_system_stays_at_origin():
    sc = WingRockScenario(truth=WingRockTruth(L_gain=0.0, w=(0.0,) * 6, meas_noise_std=0.0),
                          levels=(0.0,))
    traj = sc.simulate(0)
    assert np.array_equal(traj.x, np.zeros_like(traj.x))


def test_wingrock_tracks_square_wave():
    sc = WingRockScenario(truth=WingRockTruth(meas_noise_std=0.0))
    traj = sc.simulate(0)
    ref = sc.reference(traj.t)
    amplitude = abs(sc.levels[0] - sc.levels[1])
    # steady state: last second of every hold interval
    phase = traj.t % sc.hold
    steady = phase >= sc.hold - 1.0
    assert np.abs(traj.x[steady, 0] - ref[steady]).max() < 0.2 * amplitude


def test_wingrock_noiseless_is_seed_independent():
    sc = WingRockScenario(truth=WingRockTruth(meas_noise_std=0.0))
    a, b = sc.simulate(0), sc.simulate(7)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.u, b.u)


def test_wingrock_same_seed_bit_identical():
    sc = WingRockScenario()
    a, b = sc.simulate(3), sc.simulate(3)
    for f in ("t", "u", "y", "x"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    assert not np.array_equal(a.y, sc.simulate(4).y)


def test_wingrock_divergence_detected():
    sc = WingRockScenario(pid=PidGains(kp=-5.0, ki=0.0, kd=0.0))
    with pytest.raises(Diverged):
        sc.simulate(0)


def test_wingrock_model_uses_measured_noise():
    sc = WingRockScenario()
    assert sc.model().R[0, 0] == pytest.approx(0.01)
    assert sc.model(FilterSettings(r_std=0.5)).R[0, 0] == pytest.approx(0.25)


# -- delay ----------------------------------------------------------------------------

def test_delay_lags_are_labelled_by_physical_delay():
    sc = WingRockScenario(delay=DelayTruth())
    assert sc.param_names == tuple(f"delay{j}" for j in range(8))
    np.testing.assert_array_equal(sc.true_params, [0, 0, 0, 0, 0, 0, 3.0, 0])


def test_delay_window_one_reduces_to_unknown_gain():
    sc = WingRockScenario(delay=DelayTruth(window=1, true_delay_steps=0))
    model = sc.model()
    w = np.asarray(PAPER_WEIGHTS)
    for theta, p, u, L in [(1.0, -2.0, 4.0, 3.0), (-6.0, 0.5, -12.0, 2.2)]:
        out = augmented_transition(model, np.array([theta, p, L]), np.array([u]))
        np.testing.assert_allclose(out[:2], wingrock_euler_step(theta, p, u, w, L, sc.dt), atol=1e-12)
        assert out[2] == L
    base = WingRockScenario(truth=WingRockTruth(meas_noise_std=0.0))
    one = WingRockScenario(truth=WingRockTruth(meas_noise_std=0.0),
                           delay=DelayTruth(window=1, true_delay_steps=0))
    np.testing.assert_array_equal(base.simulate(0).x, one.simulate(0).x)


def test_delay_window_must_cover_delay():
    with pytest.raises(ValueError):
        DelayTruth(window=4, true_delay_steps=6)


def delay_regression(dither):
    sc = WingRockScenario(truth=WingRockTruth(meas_noise_std=0.0, duration=60.0),
                          delay=DelayTruth(), integrator="euler", dither_std=dither)
    traj = sc.simulate(0)
    theta, p = traj.x[:, 0], traj.x[:, 1]
    resid = np.diff(p) / sc.dt - np.asarray(sc.truth.w) @ wingrock_features(theta[:-1], p[:-1])
    return traj.u[20:-1], resid[20:]


def test_delay_only_true_lag_explains_residual():
    U, resid = delay_regression(dither=5.0)
    corr = np.array([abs(np.corrcoef(U[:, j], resid)[0, 1]) for j in range(8)])
    assert corr[6] > 0.9 and np.argmax(corr) == 6
    # neighbouring lags share the command's autocorrelation; what each lag
    # adds beyond all the others is the partial correlation
    partial = []
    for j in range(8):
        others = np.delete(U, j, axis=1)
        ru = U[:, j] - others @ np.linalg.lstsq(others, U[:, j], rcond=None)[0]
        rr = resid - others @ np.linalg.lstsq(others, resid, rcond=None)[0]
        partial.append(abs(np.corrcoef(ru, rr)[0, 1]))
    partial = np.array(partial)
    assert partial[6] > 0.9
    assert np.all(np.delete(partial, 6) < 0.2)


# -- quadrotor ------------------------------------------------------------------------

def test_thrust_axis_of_identity_and_round_trip():
    np.testing.assert_allclose(thrust_axis(np.array([1.0, 0, 0, 0])), [0, 0, 1], atol=1e-15)
    rng = np.random.default_rng(0)
    for _ in range(10):
        b3 = rng.standard_normal(3)
        b3[2] = abs(b3[2]) + 0.1
        b3 /= np.linalg.norm(b3)
        q = quat_from_axis(b3)
        assert np.linalg.norm(q) == pytest.approx(1.0)
        np.testing.assert_allclose(thrust_axis(q), b3, atol=1e-12)


def test_pwm_powers():
    np.testing.assert_allclose(pwm_powers(2.0), [1, 2, 4, 8, 16, 32])


def test_quad_drag_vanishes_at_rest():
    sc = QuadrotorScenario()
    acc = sc._accel(np.zeros(3), 0.0, np.array([0.0, 0.0, 1.0]))
    np.testing.assert_allclose(acc, 0.0, atol=1e-15)


def test_quad_hover_holds_position():
    still = SpiralReference(r0=0.0, r_rate=0.0, climb=0.0, z_amp=0.0)
    sc = QuadrotorScenario(truth=QuadTruth(d1=0.0, meas_noise_std=0.0, duration=5.0),
                           reference=still, pwm_dither_std=0.0)
    traj = sc.simulate(0)
    np.testing.assert_allclose(traj.x, 0.0, atol=1e-12)
    np.testing.assert_allclose(traj.u[:, 0], 0.0, atol=1e-12)


def test_quad_follows_spiral():
    sc = QuadrotorScenario(truth=QuadTruth(meas_noise_std=0.0, duration=20.0), pwm_dither_std=0.0)
    traj = sc.simulate(0)
    pos, _, _ = sc.reference(traj.t)
    assert np.abs(traj.x[:, :3] - pos.T).max() < 0.5


def test_quad_model_matches_plant_under_euler():
    sc = QuadrotorScenario(integrator="euler", truth=QuadTruth(meas_noise_std=0.0, d2=0.05, duration=2.0))
    traj = sc.simulate(1)
    model = sc.model(FilterSettings(r_std=0.1))
    theta = sc.true_params
    for k in range(0, len(traj) - 1, 17):
        xbar = np.concatenate([traj.x[k], theta])
        out = augmented_transition(model, xbar, traj.u[k])
        np.testing.assert_allclose(out[:6], traj.x[k + 1], atol=1e-10)


def test_quad_z_variant_is_vertical():
    sc = QuadrotorScenario(axis="z", truth=QuadTruth(d1=0.0, duration=5.0))
    traj = sc.simulate(0)
    assert traj.x.shape[1] == 2 and traj.u.shape[1] == 1
    assert sc.param_names == ("pwm^0", "pwm^1", "pwm^2", "pwm^3", "pwm^4", "pwm^5")
    with pytest.raises(ValueError):
        QuadrotorScenario(axis="xy")


# -- metrics --------------------------------------------------------------------------

def test_wingrock_metrics_definitions():
    sc = short(WingRockScenario(), 3.0)
    trace, m = run_identification(sc, "ukf", 0, FilterSettings(s0=3.0))
    est = np.asarray(m.final_estimate)
    assert len(est) == 6
    assert m.mean_l1_error == pytest.approx(np.mean(np.abs(est - np.asarray(PAPER_WEIGHTS))))
    assert m.per_step_ms == pytest.approx(np.mean(trace.step_ms[10:]))
    assert m.l1_relative_error_L is None and not m.failed


def test_delay_metrics_definitions():
    sc = short(WingRockScenario(delay=DelayTruth(), integrator="euler"), 3.0)
    _, m = run_identification(sc, "ski", 0, FilterSettings(s0=3.0), PRESET_ARD)
    est = np.asarray(m.final_estimate)
    truth = sc.true_params
    assert m.mean_l1_error == pytest.approx(np.mean(np.abs(est - truth)))
    assert m.l1_relative_error_L == pytest.approx(np.abs(est - truth).sum() / np.abs(truth).sum())
    assert m.active_gain_relative_error == pytest.approx(abs(est[6] - 3.0) / 3.0)
    prior = np.asarray(m.final_prior)
    assert m.selected_basis == [i for i in range(8) if prior[i] >= 1e-4 * prior.max()]


def test_sindy_run_reports_nonzero_coefficients():
    _, m = run_identification(WingRockScenario(), "sindy", 0)
    est = np.asarray(m.final_estimate)
    assert m.selected_basis == [i for i in range(6) if est[i] != 0.0]
    assert m.per_step_ms is None or m.per_step_ms >= 0


def test_quad_z_selects_linear_thrust():
    sc = QuadrotorScenario(axis="z", truth=QuadTruth(d1=0.0, d2=0.0), name="quad-z")
    _, m = run_identification(sc, "ski", 0, FilterSettings(s0=10.0), PRESET_ARD)
    assert not m.failed
    assert m.selected_labels == ["pwm^0", "pwm^1"]
    prior = np.asarray(m.final_prior)
    assert prior[1] == max(prior[1:])
