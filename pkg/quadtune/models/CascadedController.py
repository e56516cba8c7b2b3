#!/usr/bin/env python
#

# Copyright (c) 2024, The quadtune authors
# All rights reserved.
#
# Redistribution and use in source and binary forms, with or without
# modification, are permitted provided that the following conditions are met:
#
# * Redistributions of source code must retain the above copyright notice, this
#   list of conditions and the following disclaimer.
#
# * Redistributions in binary form must reproduce the above copyright notice,
#   this list of conditions and the following disclaimer in the documentation
#   and/or other materials provided with the distribution.
#
# THIS SOFTWARE IS PROVIDED BY THE COPYRIGHT HOLDERS AND CONTRIBUTORS "AS IS"
# AND ANY EXPRESS OR IMPLIED WARRANTIES, INCLUDING, BUT NOT LIMITED TO, THE
# IMPLIED WARRANTIES OF MERCHANTABILITY AND FITNESS FOR A PARTICULAR PURPOSE
# ARE DISCLAIMED.
# IN NO EVENT SHALL THE COPYRIGHT HOLDER OR CONTRIBUTORS BE LIABLE
# FOR ANY DIRECT, INDIRECT, INCIDENTAL, SPECIAL, EXEMPLARY, OR CONSEQUENTIAL
# DAMAGES (INCLUDING, BUT NOT LIMITED TO, PROCUREMENT OF SUBSTITUTE GOODS OR
# SERVICES; LOSS OF USE, DATA, OR PROFITS; OR BUSINESS INTERRUPTION) HOWEVER
# CAUSED AND ON ANY THEORY OF LIABILITY, WHETHER IN CONTRACT, STRICT LIABILITY,
# OR TORT (INCLUDING NEGLIGENCE OR OTHERWISE) ARISING IN ANY WAY OUT OF THE USE
# OF THIS SOFTWARE, EVEN IF ADVISED OF THE POSSIBILITY OF SUCH DAMAGE.


"""
Cascaded position / attitude controller.

The outer loop turns position errors into a collective thrust command
and roll/pitch setpoints, the inner loop is a PD law on Euler rates whose
output is made exact by feedback linearization of the rotational
Euler-Lagrange dynamics.
"""

from quadtune.quadtune import (Component, ConfigError, DegenerateThrust,
                               DimensionMismatch)
from quadtune.models.QuadrotorModel import (BodyWrench, check_attitude,
                                            euler_rate_map,
                                            euler_rate_map_inv,
                                            euler_rate_map_partials)
from quadtune.models.MotorMixer import wrench_to_thrusts

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np


def wrap_angle(a):
    """ Wrap to (-pi, pi] """
    w = math.remainder(a, 2.0 * math.pi)
    if w == -math.pi:
        w = math.pi
    return w


@dataclass
class OuterGains:
    kP1_z: float = 8.9
    kP2_z: float = 19.8
    kP1_xy: float = 0.6
    kP2_xy: float = 3.9
    kD_xy: float = 0.29

    def __post_init__(self):
        _check_positive(self)


@dataclass
class InnerGains:
    """ The five tunable attitude gains, roll and pitch share theirs """
    kP1_phitheta: float = 4.0
    kP1_psi: float = 2.0
    kP2_phitheta: float = 11.467
    kP2_psi: float = 5.4801
    kD_phitheta: float = 0.81905

    # Column order used by actions, traces and as_array().
    NAMES = ('kP1_phitheta', 'kP1_psi', 'kP2_phitheta', 'kP2_psi',
             'kD_phitheta')

    def __post_init__(self):
        _check_positive(self)

    def as_array(self):
        return np.array([getattr(self, n) for n in self.NAMES])

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float)
        if a.shape != (5,):
            raise DimensionMismatch('Expected 5 inner gains, not shape %s' %
                                    (a.shape,))
        return cls(*[float(x) for x in a])


def _check_positive(gains):
    for f in fields(gains):
        val = getattr(gains, f.name)
        if not (math.isfinite(val) and val > 0):
            raise ConfigError('Gain %s must be > 0, not %r' % (f.name, val))


@dataclass
class GainSet:
    outer: OuterGains = field(default_factory=OuterGains)
    inner: InnerGains = field(default_factory=InnerGains)

    def with_inner(self, inner):
        return replace(self, inner=inner)


@dataclass
class AttitudeSetpoint:
    phi_r: float = 0.0
    theta_r: float = 0.0
    psi_r: float = 0.0

    def as_array(self):
        return np.array([self.phi_r, self.theta_r, self.psi_r])


@dataclass
class ControllerMemory:
    """
    Discrete-derivative history of the controller.
    Index 0 is roll / x, index 1 is pitch / y.
    """
    e_rate_prev: np.ndarray = field(default_factory=lambda: np.zeros(2))
    de_rate: np.ndarray = field(default_factory=lambda: np.zeros(2))
    e_vel_prev: np.ndarray = field(default_factory=lambda: np.zeros(2))
    de_vel: np.ndarray = field(default_factory=lambda: np.zeros(2))
    v_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    setpoint: AttitudeSetpoint = field(default_factory=AttitudeSetpoint)
    tau_T: float = 1.0
    degenerate_count: int = 0

    def reset(self):
        self.e_rate_prev[:] = 0.0
        self.de_rate[:] = 0.0
        self.e_vel_prev[:] = 0.0
        self.de_vel[:] = 0.0
        self.v_pos = np.zeros(3)
        self.setpoint = AttitudeSetpoint()
        self.tau_T = 1.0
        self.degenerate_count = 0


def filtered_derivative(e, e_prev, d_prev, dt, tau_filter):
    """
    Backward difference through a first-order low-pass.
    Works elementwise on arrays.
    """
    alpha = dt / (tau_filter + dt)
    raw = (e - e_prev) / dt
    return d_prev + alpha * (raw - d_prev)


def lateral_thrust_map(tau_T, psi, params):
    """
    F_B*: small-angle map from [phi, theta] to horizontal acceleration
    [x_dd, y_dd] at collective command @param tau_T.
    """
    s = 4.0 * params.T_max * (tau_T - 1.0) / params.m_tot
    sp, cp = math.sin(psi), math.cos(psi)
    return s * np.array([[sp, cp],
                         [-cp, sp]])


def outer_loop(s, ref, g_out, mem, params, dt=0.005, tau_filter=0.02,
               tilt_limit=0.5, tilt_guard=0.1, degenerate_eps=1e-4,
               strict=False):
    """
    Position loop.

    @param s        RigidBodyState
    @param ref      ReferencePoint
    @param g_out    OuterGains
    @param mem      ControllerMemory, updated in place
    @param strict   Raise DegenerateThrust instead of holding the setpoint
    @returns (tau_T, AttitudeSetpoint)
    """
    phi, theta, psi = s.eta
    e_pos = ref.p_r - s.p

    e_vel = np.array([g_out.kP1_xy * e_pos[0] - s.v[0],
                      g_out.kP1_xy * e_pos[1] - s.v[1]])
    mem.de_vel = filtered_derivative(e_vel, mem.e_vel_prev, mem.de_vel,
                                     dt, tau_filter)
    mem.e_vel_prev = e_vel
    v_xy = g_out.kP2_xy * e_vel + g_out.kD_xy * mem.de_vel

    e_z = g_out.kP1_z * e_pos[2] - s.v[2]
    v_z = g_out.kP2_z * e_z
    mem.v_pos = np.array([v_xy[0], v_xy[1], v_z])

    cc = math.cos(phi) * math.cos(theta)
    tilted = abs(cc) < tilt_guard
    cc = max(abs(cc), tilt_guard)

    tau_T = 1.0 + params.m_tot * (params.g + v_z) / (4.0 * params.T_max * cc)
    tau_T = min(max(tau_T, 1.0), 2.0)
    mem.tau_T = tau_T

    prev = mem.setpoint
    if tilted or abs(tau_T - 1.0) < degenerate_eps:
        mem.degenerate_count += 1
        if strict:
            raise DegenerateThrust('Collective command %.6f (tilt cos %.3f)'
                                   ' cannot be inverted' % (tau_T, cc))
        sp = AttitudeSetpoint(prev.phi_r, prev.theta_r, ref.psi_r)
    else:
        # F_B* is a scaled rotation: its inverse is the scaled transpose.
        F = lateral_thrust_map(tau_T, psi, params)
        ang = F.T @ v_xy / (F[0, 0] ** 2 + F[0, 1] ** 2)
        ang = np.clip(ang, -tilt_limit, tilt_limit)
        sp = AttitudeSetpoint(float(ang[0]), float(ang[1]), ref.psi_r)

    mem.setpoint = sp
    return tau_T, sp


def inner_pd(s, sp, g_in, mem, dt=0.005, tau_filter=0.02):
    """
    PD law on Euler rates.

    @returns v, the commanded Euler-angle accelerations (3-vector)
    """
    eta_dot = euler_rate_map_inv(s.eta) @ s.omega_b
    e_ang = np.array([sp.phi_r - s.eta[0],
                      sp.theta_r - s.eta[1],
                      wrap_angle(sp.psi_r - s.eta[2])])

    e_rate = np.array([g_in.kP1_phitheta * e_ang[0] - eta_dot[0],
                       g_in.kP1_phitheta * e_ang[1] - eta_dot[1]])
    mem.de_rate = filtered_derivative(e_rate, mem.e_rate_prev, mem.de_rate,
                                      dt, tau_filter)
    mem.e_rate_prev = e_rate

    e_psi_rate = g_in.kP1_psi * e_ang[2] - eta_dot[2]

    v_pt = g_in.kP2_phitheta * e_rate + g_in.kD_phitheta * mem.de_rate
    return np.array([v_pt[0], v_pt[1], g_in.kP2_psi * e_psi_rate])


def inertia_matrix_B(eta, params):
    """ Generalized rotational inertia B(eta) = W^T I W """
    check_attitude(eta)
    W = euler_rate_map(eta)
    return W.T @ params.I @ W


def _inertia_partials(eta, params):
    """ dB/d(eta_i) for i = 0..2, shape (3, 3, 3) """
    W = euler_rate_map(eta)
    dW = euler_rate_map_partials(eta)
    IW = params.I @ W
    dB = np.empty((3, 3, 3))
    for i in range(3):
        a = dW[i].T @ IW
        dB[i] = a + a.T
    return dB


def coriolis_C(eta, eta_dot, params):
    """
    Coriolis matrix from the Christoffel symbols of B:
    C[k, j] = sum_i 1/2 (dB_kj/de_i + dB_ki/de_j - dB_ij/de_k) eta_dot_i
    """
    check_attitude(eta)
    ed = np.asarray(eta_dot, dtype=float)
    dB = _inertia_partials(eta, params)
    return 0.5 * (np.einsum('ikj,i->kj', dB, ed) +
                  np.einsum('jki,i->kj', dB, ed) -
                  np.einsum('kij,i->kj', dB, ed))


def feedback_linearize(eta, eta_dot, v, params):
    """
    Body moment M' = W^-T (B v + C eta_dot) that turns every attitude
    channel into a double integrator eta_dd = v.
    """
    B = inertia_matrix_B(eta, params)
    C = coriolis_C(eta, eta_dot, params)
    return euler_rate_map_inv(eta).T @ (B @ v + C @ eta_dot)


def controller_step(s, ref, gains, mem, params, **kwargs):
    """
    Outer loop, inner loop, feedback linearization and mixing.

    @param kwargs  Passed to outer_loop (dt, tau_filter, tilt_limit, ...)
    @returns MotorThrusts
    """
    tau_T, sp = outer_loop(s, ref, gains.outer, mem, params, **kwargs)
    v = inner_pd(s, sp, gains.inner, mem,
                 dt=kwargs.get('dt', 0.005),
                 tau_filter=kwargs.get('tau_filter', 0.02))
    eta_dot = euler_rate_map_inv(s.eta) @ s.omega_b
    moment = feedback_linearize(s.eta, eta_dot, v, params)
    thrust = 4.0 * params.T_max * (tau_T - 1.0)
    return wrench_to_thrusts(BodyWrench(thrust=thrust, moment=moment),
                             params)


class CascadedController (Component):
    """ Stateful controller instance: gains plus derivative memory. """

    default_conf = {'dt_ctrl': 0.005,
                    'tau_filter': 0.02,
                    'tilt_limit': 0.5,
                    'tilt_guard': 0.1,
                    'degenerate_eps': 1e-4,
                    'strict': False}

    def __init__(self, lab, params, gains=None, conf=None):
        """
        @param lab     Owning Lab
        @param params  QuadrotorParams
        @param gains   GainSet (default: manually tuned gains)
        @param conf    Configuration dict, see default_conf.
        """
        super(CascadedController, self).__init__(lab, conf=conf)
        self.params = params
        self.base_gains = gains if gains is not None else GainSet()
        self.gains = self.base_gains
        self.mem = ControllerMemory()
        self.last = None

    def reset(self):
        self.gains = self.base_gains
        self.mem.reset()
        self.last = None

    def set_inner(self, inner):
        self.gains = self.gains.with_inner(inner)

    @property
    def setpoint(self):
        return self.mem.setpoint

    def step(self, s, ref):
        held = self.mem.degenerate_count
        self.last = controller_step(
            s, ref, self.gains, self.mem, self.params,
            dt=self.conf['dt_ctrl'],
            tau_filter=self.conf['tau_filter'],
            tilt_limit=self.conf['tilt_limit'],
            tilt_guard=self.conf['tilt_guard'],
            degenerate_eps=self.conf['degenerate_eps'],
            strict=self.conf['strict'])
        if self.mem.degenerate_count != held:
            self.dbg('Degenerate thrust command %.6f: holding setpoint' %
                     self.mem.tau_T)
        return self.last
