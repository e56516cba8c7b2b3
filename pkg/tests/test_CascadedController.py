#!/usr/bin/env python

import math

import numpy as np
import pytest

from quadtune.quadtune import (Lab, ConfigError, DegenerateThrust,
                               SingularAttitude)
from quadtune.models.QuadrotorModel import (
    BodyWrench, QuadrotorParams, RigidBodyState, euler_rate_map_inv,
    euler_rate_map_partials, state_derivative, step_rk4)
from quadtune.models.MissionTrajectory import ReferencePoint
from quadtune.models.CascadedController import (
    AttitudeSetpoint, CascadedController, ControllerMemory, GainSet,
    InnerGains, OuterGains, controller_step, coriolis_C,
    feedback_linearize, filtered_derivative, inertia_matrix_B, inner_pd,
    lateral_thrust_map, outer_loop, wrap_angle)


params = QuadrotorParams()


def random_state(rng):
    return RigidBodyState(eta=[rng.uniform(-1, 1), rng.uniform(-1, 1),
                               rng.uniform(-math.pi, math.pi)],
                          omega_b=rng.uniform(-2, 2, 3))


def test_gains():
    inner = InnerGains()
    np.testing.assert_array_equal(
        inner.as_array(), [4.0, 2.0, 11.467, 5.4801, 0.81905])
    assert InnerGains.from_array(inner.as_array()) == inner
    with pytest.raises(ConfigError):
        InnerGains(kD_phitheta=0.0)
    with pytest.raises(ConfigError):
        OuterGains(kP1_z=-1.0)

    g = GainSet()
    g2 = g.with_inner(InnerGains(kP1_psi=3.0))
    assert g2.inner.kP1_psi == 3.0
    assert g.inner.kP1_psi == 2.0
    assert g2.outer == g.outer


def test_wrap_angle():
    assert wrap_angle(0.2) == pytest.approx(0.2)
    assert wrap_angle(2 * math.pi + 0.1) == pytest.approx(0.1)
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


def test_filtered_derivative():
    d = filtered_derivative(0.4, 0.0, 0.0, 0.005, 0.02)
    assert d == pytest.approx(16.0)
    d = filtered_derivative(np.array([1.0, 1.0]), np.array([1.0, 1.0]),
                            np.array([10.0, -10.0]), 0.005, 0.02)
    np.testing.assert_allclose(d, [8.0, -8.0])


def test_outer_loop_hover():
    mem = ControllerMemory()
    s = RigidBodyState(p=[3.0, 0.0, 5.0])
    ref = ReferencePoint(p_r=np.array([3.0, 0.0, 5.0]))
    tau_T, sp = outer_loop(s, ref, OuterGains(), mem, params)
    assert tau_T == pytest.approx(1.3491, abs=1e-4)
    assert tau_T == pytest.approx(1 + 11.772 / (4 * 8.43), abs=1e-12)
    assert sp.phi_r == 0.0
    assert sp.theta_r == 0.0
    assert mem.degenerate_count == 0


def test_outer_loop_altitude_error():
    mem = ControllerMemory()
    ref = ReferencePoint(p_r=np.array([0.0, 0.0, 1.0]))
    tau_T, _ = outer_loop(RigidBodyState(), ref, OuterGains(), mem, params)
    assert mem.v_pos[2] == pytest.approx(176.22, abs=1e-9)
    assert tau_T == 2.0


def test_outer_loop_lateral_inverse():
    rng = np.random.default_rng(11)
    for _ in range(100):
        psi = rng.uniform(-math.pi, math.pi)
        mem = ControllerMemory()
        s = RigidBodyState(p=[0.0, 0.0, 5.0], eta=[0.0, 0.0, psi])
        ref = ReferencePoint(p_r=np.array([rng.uniform(-0.05, 0.05),
                                           rng.uniform(-0.05, 0.05), 5.0]),
                             psi_r=psi)
        tau_T, sp = outer_loop(s, ref, OuterGains(), mem, params)
        F = lateral_thrust_map(tau_T, psi, params)
        expected = np.linalg.solve(F, mem.v_pos[:2])
        assert np.all(np.abs(expected) < 0.5)
        np.testing.assert_allclose([sp.phi_r, sp.theta_r], expected,
                                   rtol=1e-10, atol=1e-14)

    mem = ControllerMemory()
    s = RigidBodyState(p=[0.0, 0.0, 5.0])
    ref = ReferencePoint(p_r=np.array([0.05, 0.0, 5.0]))
    _, sp = outer_loop(s, ref, OuterGains(), mem, params)
    assert sp.theta_r > 0
    assert sp.phi_r == pytest.approx(0.0, abs=1e-15)


def test_outer_loop_mirror():
    s = RigidBodyState(p=[0.0, 0.0, 5.0])
    _, spx = outer_loop(s, ReferencePoint(p_r=np.array([0.1, 0.0, 5.0])),
                        OuterGains(), ControllerMemory(), params)
    _, spy = outer_loop(s, ReferencePoint(p_r=np.array([0.0, 0.1, 5.0])),
                        OuterGains(), ControllerMemory(), params)
    assert spx.theta_r == pytest.approx(-spy.phi_r, rel=1e-12)
    assert spy.theta_r == pytest.approx(0.0, abs=1e-15)


def test_outer_loop_tilt_clamp():
    rng = np.random.default_rng(12)
    for _ in range(200):
        mem = ControllerMemory()
        s = RigidBodyState(p=rng.uniform(-50, 50, 3),
                           v=rng.uniform(-10, 10, 3),
                           eta=[rng.uniform(-1, 1), rng.uniform(-1, 1),
                                rng.uniform(-3, 3)])
        ref = ReferencePoint(p_r=rng.uniform(-50, 50, 3))
        tau_T, sp = outer_loop(s, ref, OuterGains(), mem, params)
        assert 1.0 <= tau_T <= 2.0
        assert abs(sp.phi_r) <= 0.5
        assert abs(sp.theta_r) <= 0.5


def test_outer_loop_degenerate():
    mem = ControllerMemory()
    mem.setpoint = AttitudeSetpoint(0.1, -0.2, 0.0)
    s = RigidBodyState(p=[0.0, 0.0, 5.0], eta=[1.5, 0.0, 0.0])
    ref = ReferencePoint(p_r=np.array([1.0, 1.0, 5.0]), psi_r=0.3)
    _, sp = outer_loop(s, ref, OuterGains(), mem, params)
    assert (sp.phi_r, sp.theta_r, sp.psi_r) == (0.1, -0.2, 0.3)
    assert mem.degenerate_count == 1

    # Free fall demand: collective clipped to 1, nothing to invert.
    mem = ControllerMemory()
    s = RigidBodyState(p=[0.0, 0.0, 10.0])
    ref = ReferencePoint(p_r=np.array([0.0, 0.0, 0.0]))
    tau_T, sp = outer_loop(s, ref, OuterGains(), mem, params)
    assert tau_T == 1.0
    assert mem.degenerate_count == 1

    with pytest.raises(DegenerateThrust):
        outer_loop(s, ref, OuterGains(), ControllerMemory(), params,
                   strict=True)


def test_inner_pd():
    g = InnerGains()
    v = inner_pd(RigidBodyState(), AttitudeSetpoint(), g, ControllerMemory())
    np.testing.assert_array_equal(v, np.zeros(3))

    v = inner_pd(RigidBodyState(), AttitudeSetpoint(phi_r=0.1), g,
                 ControllerMemory())
    assert v[0] == pytest.approx(11.467 * 0.4 + 0.81905 * 16.0, rel=1e-12)
    assert v[0] == pytest.approx(17.6916, abs=1e-4)
    assert v[1] == 0.0

    v = inner_pd(RigidBodyState(), AttitudeSetpoint(psi_r=0.2), g,
                 ControllerMemory())
    assert v[2] == pytest.approx(2.19204, abs=1e-9)

    # Yaw error is taken the short way around.
    v = inner_pd(RigidBodyState(eta=[0, 0, math.pi - 0.1]),
                 AttitudeSetpoint(psi_r=-math.pi + 0.1), g,
                 ControllerMemory())
    assert v[2] == pytest.approx(5.4801 * 2 * 0.2, rel=1e-9)


def test_inner_pd_linearity():
    g = InnerGains()
    s = RigidBodyState()
    v1 = inner_pd(s, AttitudeSetpoint(0.05, -0.03, 0.1), g,
                  ControllerMemory())
    v2 = inner_pd(s, AttitudeSetpoint(0.1, -0.06, 0.2), g,
                  ControllerMemory())
    np.testing.assert_allclose(v2, 2 * v1, rtol=1e-12)


def test_inertia_matrix_B():
    np.testing.assert_array_equal(inertia_matrix_B(np.zeros(3), params),
                                  params.I)
    rng = np.random.default_rng(13)
    for _ in range(100):
        eta = random_state(rng).eta
        B = inertia_matrix_B(eta, params)
        assert np.max(np.abs(B - B.T)) < 1e-14
        assert np.all(np.linalg.eigvalsh(B) > 0)
    with pytest.raises(SingularAttitude):
        inertia_matrix_B([0.0, math.pi / 2, 0.0], params)


def test_coriolis_skew():
    assert np.array_equal(coriolis_C([0.3, 0.2, 0.1], np.zeros(3), params),
                          np.zeros((3, 3)))

    rng = np.random.default_rng(14)
    h = 1e-6
    for _ in range(100):
        eta = random_state(rng).eta
        eta_dot = rng.uniform(-2, 2, 3)
        B_dot = (inertia_matrix_B(eta + h * eta_dot, params) -
                 inertia_matrix_B(eta - h * eta_dot, params)) / (2 * h)
        N = B_dot - 2 * coriolis_C(eta, eta_dot, params)
        assert np.max(np.abs(N + N.T)) < 1e-6


def test_feedback_linearize():
    m = feedback_linearize(np.zeros(3), np.zeros(3), np.array([1.0, 0, 0]),
                           params)
    np.testing.assert_allclose(m, [0.0131, 0, 0], atol=1e-15)
    m = feedback_linearize([0.2, 0.1, 0.0], np.zeros(3), np.zeros(3), params)
    np.testing.assert_allclose(m, np.zeros(3), atol=1e-15)


def test_feedback_linearize_closed_loop():
    """ Plant angular accelerations under the linearizing moment
        reproduce the commanded Euler accelerations. """
    rng = np.random.default_rng(15)
    for _ in range(200):
        s = random_state(rng)
        v = rng.uniform(-5, 5, 3)
        W_inv = euler_rate_map_inv(s.eta)
        eta_dot = W_inv @ s.omega_b
        moment = feedback_linearize(s.eta, eta_dot, v, params)

        omega_dot = state_derivative(s, BodyWrench(0.0, moment), params)[9:]
        W_dot = np.einsum('ijk,i->jk', euler_rate_map_partials(s.eta),
                          eta_dot)
        eta_dd = W_inv @ (omega_dot - W_dot @ eta_dot)
        np.testing.assert_allclose(eta_dd, v, rtol=0, atol=1e-6)


def test_controller_step_hover():
    s = RigidBodyState(p=[3.0, 0.0, 5.0])
    ref = ReferencePoint(p_r=np.array([3.0, 0.0, 5.0]))
    t = controller_step(s, ref, GainSet(), ControllerMemory(), params)
    np.testing.assert_allclose(t.t, [2.943] * 4, rtol=0, atol=1e-9)
    assert not t.saturated


def test_controller_step_tilted():
    mem = ControllerMemory()
    s = RigidBodyState(p=[0.0, 0.0, 5.0], eta=[1.5, 0.0, 0.0])
    ref = ReferencePoint(p_r=np.array([0.0, 0.0, 5.0]))
    t = controller_step(s, ref, GainSet(), mem, params)
    assert np.all(np.isfinite(t.t))
    assert np.all(t.t >= 0) and np.all(t.t <= params.T_max)
    assert mem.degenerate_count == 1


def test_yaw_step_response():
    mem = ControllerMemory()
    s = RigidBodyState(p=[0.0, 0.0, 5.0])
    ref = ReferencePoint(p_r=np.array([0.0, 0.0, 5.0]), psi_r=0.2)
    gains = GainSet()
    peak = 0.0
    for k in range(600):
        t = controller_step(s, ref, gains, mem, params)
        w = t.to_wrench(params)
        for _ in range(5):
            s = step_rk4(s, w, 1e-3, params)
        peak = max(peak, s.eta[2])
        if (k + 1) * 0.005 >= 2.0:
            assert abs(s.eta[2] - 0.2) <= 0.01
    assert peak < 0.2 * 1.2
    assert np.linalg.norm(s.p - [0.0, 0.0, 5.0]) < 1e-3


def test_controller_component(tmp_path):
    lab = Lab('TestLab', str(tmp_path))
    ctrl = CascadedController(lab, params)
    assert ctrl.gains == GainSet()

    ctrl.set_inner(InnerGains(kP1_phitheta=5.0))
    assert ctrl.gains.inner.kP1_phitheta == 5.0

    s = RigidBodyState(p=[3.0, 0.0, 5.0])
    ref = ReferencePoint(p_r=np.array([3.1, 0.0, 5.0]))
    ctrl.step(s, ref)
    assert ctrl.setpoint.theta_r > 0
    assert ctrl.last is not None

    ctrl.reset()
    assert ctrl.gains == GainSet()
    assert ctrl.setpoint == AttitudeSetpoint()
    assert np.array_equal(ctrl.mem.de_vel, np.zeros(2))

    strict = CascadedController(lab, params, conf={'strict': True})
    with pytest.raises(DegenerateThrust):
        strict.step(RigidBodyState(p=[0.0, 0.0, 10.0]), ReferencePoint())
