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
Quadrotor rigid-body model: Newton-Euler equations with the attitude
integrated directly in ZYX Euler angles, fixed-step RK4.

State vector layout (12): [p(3), v(3), eta(3), omega_b(3)], z up.
"""

from quadtune.quadtune import (Component, ConfigError, DimensionMismatch,
                               NonFiniteState, OutOfRange, SingularAttitude)

import math
from dataclasses import dataclass, field

import numpy as np


# Distance from the pitch singularity at which the Euler-rate map is refused.
EPS_SING = 1e-6

# Geometry and motor constants of the measured vehicle. They are kept with
# the parameters but not consumed by the dynamics.
VEHICLE_METADATA = {
    'm_prop': 0.01,        # kg
    'm_m': 0.045,          # kg
    'm_cg': 0.98,          # kg
    'r_cg': 0.0625,        # m
    'h_cg': 0.13,          # m
    'r_m': 0.015,          # m
    'h_m': 0.45,           # m
    'r': 0.125,            # m
    'tau': 0.1056,         # N.m
    'k_motor': 1.4422e-3,
    'b': 3.1427e-7,
}


def _vec3(a, what):
    a = np.asarray(a, dtype=float)
    if a.shape != (3,):
        raise DimensionMismatch('%s must be a 3-vector, not shape %s' %
                                (what, a.shape))
    return a


@dataclass
class QuadrotorParams:
    """
    Physical constants of the vehicle.

    m_tot: total mass [kg]; g: gravity [m/s^2]; l: arm length [m];
    I: inertia matrix [kg.m^2]; T_max: per-motor maximum thrust [N];
    drag_ratio: rotor drag to lift coefficient ratio c_D/c_L.
    """
    m_tot: float = 1.2
    g: float = 9.81
    l: float = 0.225
    I: np.ndarray = field(
        default_factory=lambda: np.diag([0.0131, 0.0131, 0.0234]))
    T_max: float = 8.43
    drag_ratio: float = 0.0237
    metadata: dict = field(default_factory=lambda: dict(VEHICLE_METADATA))

    def __post_init__(self):
        for key in ('m_tot', 'l', 'T_max', 'drag_ratio'):
            val = getattr(self, key)
            if not (math.isfinite(val) and val > 0):
                raise ConfigError('%s must be > 0, not %r' % (key, val))
        if not (math.isfinite(self.g) and self.g >= 0):
            raise ConfigError('g must be >= 0, not %r' % self.g)

        self.I = np.asarray(self.I, dtype=float)
        if self.I.shape != (3, 3):
            raise DimensionMismatch('I must be 3x3, not %s' %
                                    (self.I.shape,))
        if not np.allclose(self.I, self.I.T, rtol=0, atol=1e-15):
            raise ConfigError('I must be symmetric')
        if np.any(np.diag(self.I) <= 0) or \
           np.any(np.linalg.eigvalsh(self.I) <= 0):
            raise ConfigError('I must be positive definite')

        self.I_inv = np.linalg.inv(self.I)
        self.I_rows = self.I.tolist()
        self.I_inv_rows = self.I_inv.tolist()

    @classmethod
    def from_diagonal(cls, Ixx, Iyy, Izz, **kwargs):
        return cls(I=np.diag([Ixx, Iyy, Izz]), **kwargs)

    @property
    def hover_thrust(self):
        """ Total thrust balancing gravity [N] """
        return self.m_tot * self.g


@dataclass
class RigidBodyState:
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    eta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_b: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.p = _vec3(self.p, 'p')
        self.v = _vec3(self.v, 'v')
        self.eta = _vec3(self.eta, 'eta')
        self.omega_b = _vec3(self.omega_b, 'omega_b')

    def to_vector(self):
        return np.concatenate((self.p, self.v, self.eta, self.omega_b))

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (12,):
            raise DimensionMismatch('State vector must have 12 entries, '
                                    'not shape %s' % (x.shape,))
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:9].copy(),
                   x[9:12].copy())

    @classmethod
    def at_rest(cls, p, psi=0.0):
        """ Vehicle at rest at @param p, level, heading @param psi """
        return cls(p=p, eta=[0.0, 0.0, psi])

    def is_finite(self):
        return bool(np.all(np.isfinite(self.to_vector())))

    def copy(self):
        return RigidBodyState.from_vector(self.to_vector())


@dataclass
class BodyWrench:
    """ Total thrust along body +z [N] and body moment [N.m] """
    thrust: float = 0.0
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.thrust = float(self.thrust)
        self.moment = _vec3(self.moment, 'moment')
        if not self.thrust >= 0:
            raise OutOfRange('Thrust must be >= 0, not %r' % self.thrust)


@dataclass
class DisturbanceConfig:
    """
    Additive external wrench for robustness experiments:
    a constant inertial force, a constant body moment and a sinusoidal
    horizontal gust force along heading gust_direction.
    """
    enabled: bool = False
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gust_amplitude: float = 0.0     # N
    gust_period: float = 5.0        # s
    gust_direction: float = 0.0     # rad, from inertial x

    def __post_init__(self):
        self.force = _vec3(self.force, 'force')
        self.moment = _vec3(self.moment, 'moment')
        if not self.gust_period > 0:
            raise ConfigError('gust_period must be > 0')
        if self.gust_amplitude < 0:
            raise ConfigError('gust_amplitude must be >= 0')

    def wrench_at(self, t):
        """
        @returns (inertial force, body moment) at time @param t,
                 or (None, None) when disabled.
        """
        if not self.enabled:
            return None, None
        f = self.force.copy()
        if self.gust_amplitude > 0:
            g = self.gust_amplitude * math.sin(2.0 * math.pi * t /
                                               self.gust_period)
            f[0] += g * math.cos(self.gust_direction)
            f[1] += g * math.sin(self.gust_direction)
        return f, self.moment.copy()


def skew(a):
    """ Cross-product matrix: skew(a) @ b == a x b """
    a = _vec3(a, 'a')
    return np.array([[0.0, -a[2], a[1]],
                     [a[2], 0.0, -a[0]],
                     [-a[1], a[0], 0.0]])


def rotation_matrix(eta):
    """ Body-to-inertial rotation R = Rz(psi) Ry(theta) Rx(phi) """
    phi, theta, psi = _vec3(eta, 'eta')
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array([
        [ct * cp, sf * st * cp - cf * sp, cf * st * cp + sf * sp],
        [ct * sp, sf * st * sp + cf * cp, cf * st * sp - sf * cp],
        [-st, sf * ct, cf * ct]])


def check_attitude(eta):
    if abs(eta[1]) >= math.pi / 2 - EPS_SING:
        raise SingularAttitude('Pitch %r rad is at the Euler-rate '
                               'singularity' % (eta[1],))


def euler_rate_map(eta):
    """ W(eta): Euler rates to body rates, omega_b = W @ eta_dot """
    phi, theta, _ = _vec3(eta, 'eta')
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    return np.array([[1.0, 0.0, -st],
                     [0.0, cf, sf * ct],
                     [0.0, -sf, cf * ct]])


def euler_rate_map_inv(eta):
    """
    W(eta)^-1: body rates to Euler rates, eta_dot = W^-1 @ omega_b.
    Raises SingularAttitude near |theta| = pi/2.
    """
    eta = _vec3(eta, 'eta')
    check_attitude(eta)
    phi, theta = eta[0], eta[1]
    cf, sf = math.cos(phi), math.sin(phi)
    ct, tt = math.cos(theta), math.tan(theta)
    return np.array([[1.0, sf * tt, cf * tt],
                     [0.0, cf, -sf],
                     [0.0, sf / ct, cf / ct]])


def euler_rate_map_partials(eta):
    """
    @returns array of shape (3, 3, 3), entry [i] is dW/d(eta_i).
             W does not depend on psi.
    """
    phi, theta, _ = _vec3(eta, 'eta')
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    d = np.zeros((3, 3, 3))
    d[0] = [[0.0, 0.0, 0.0],
            [0.0, -sf, cf * ct],
            [0.0, -cf, -sf * ct]]
    d[1] = [[0.0, 0.0, -ct],
            [0.0, 0.0, -sf * st],
            [0.0, 0.0, -cf * st]]
    return d


def _rhs(x, thrust, m, f, params):
    """
    State derivative on the raw 12-vector, written out on scalars.
    @param m  total body moment (mx, my, mz)
    @param f  external inertial force (fx, fy, fz)
    """
    _, _, _, vx, vy, vz, phi, theta, psi, p, q, r = x.tolist()
    if not math.isfinite(phi + psi):
        raise NonFiniteState('Non-finite attitude %r' %
                             ([phi, theta, psi],))
    if abs(theta) >= math.pi / 2 - EPS_SING:
        raise SingularAttitude('Pitch %r rad is at the Euler-rate '
                               'singularity' % (theta,))
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)

    # thrust along the third column of R
    a = thrust / params.m_tot
    inv_m = 1.0 / params.m_tot
    ax = a * (cf * st * cp + sf * sp) + f[0] * inv_m
    ay = a * (cf * st * sp - sf * cp) + f[1] * inv_m
    az = a * cf * ct - params.g + f[2] * inv_m

    # W^-1 @ omega_b
    s = sf * q + cf * r
    phi_dot = p + s * st / ct
    theta_dot = cf * q - sf * r
    psi_dot = s / ct

    (i00, i01, i02), (i10, i11, i12), (i20, i21, i22) = params.I_rows
    h0 = i00 * p + i01 * q + i02 * r
    h1 = i10 * p + i11 * q + i12 * r
    h2 = i20 * p + i21 * q + i22 * r
    b0 = m[0] - (q * h2 - r * h1)
    b1 = m[1] - (r * h0 - p * h2)
    b2 = m[2] - (p * h1 - q * h0)
    (j00, j01, j02), (j10, j11, j12), (j20, j21, j22) = params.I_inv_rows

    return np.array([vx, vy, vz, ax, ay, az, phi_dot, theta_dot, psi_dot,
                     j00 * b0 + j01 * b1 + j02 * b2,
                     j10 * b0 + j11 * b1 + j12 * b2,
                     j20 * b0 + j21 * b1 + j22 * b2])


def _loads(moment, f_ext, m_ext):
    m = [float(v) for v in moment]
    if m_ext is not None:
        m = [a + float(b) for a, b in zip(m, m_ext)]
    f = (0.0, 0.0, 0.0) if f_ext is None else [float(v) for v in f_ext]
    return m, f


def _derivative(x, thrust, moment, params, f_ext=None, m_ext=None):
    """ State derivative on the raw 12-vector """
    m, f = _loads(moment, f_ext, m_ext)
    return _rhs(np.asarray(x, dtype=float), float(thrust), m, f, params)


def state_derivative(s, u, params, f_ext=None, m_ext=None):
    """
    Newton-Euler right-hand side.

    @param s      RigidBodyState
    @param u      BodyWrench
    @param params QuadrotorParams
    @param f_ext  Optional additive inertial force [N]
    @param m_ext  Optional additive body moment [N.m]
    @returns 12-vector [p_dot, v_dot, eta_dot, omega_dot]
    """
    return _derivative(s.to_vector(), u.thrust, u.moment, params,
                       f_ext=f_ext, m_ext=m_ext)


def rk4_vector(x, thrust, moment, dt, params, f_ext=None, m_ext=None):
    """ One classical RK4 step on the raw state vector, wrench held. """
    m, f = _loads(moment, f_ext, m_ext)
    thrust = float(thrust)
    k1 = _rhs(x, thrust, m, f, params)
    k2 = _rhs(x + 0.5 * dt * k1, thrust, m, f, params)
    k3 = _rhs(x + 0.5 * dt * k2, thrust, m, f, params)
    k4 = _rhs(x + dt * k3, thrust, m, f, params)
    xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(xn)):
        raise NonFiniteState('Non-finite state after RK4 step: %s' % xn)
    return xn


def step_rk4(s, u, dt, params, f_ext=None, m_ext=None):
    """
    Advance @param s by @param dt seconds with wrench @param u held
    constant (zero-order hold).

    @returns new RigidBodyState
    """
    if not (dt > 0 and dt <= 0.01):
        raise OutOfRange('dt must be in (0, 0.01], not %r' % dt)
    return RigidBodyState.from_vector(
        rk4_vector(s.to_vector(), u.thrust, u.moment, dt, params,
                   f_ext=f_ext, m_ext=m_ext))


class QuadrotorModel (Component):
    """ Simulated vehicle: holds the state and the simulation clock. """

    default_conf = {'dt_physics': 1e-3}

    def __init__(self, lab, params=None, state=None, disturbance=None,
                 conf=None):
        """
        @param lab         Owning Lab
        @param params      QuadrotorParams (default: measured vehicle)
        @param state       Initial RigidBodyState (default: at rest, origin)
        @param disturbance DisturbanceConfig (default: disabled)
        @param conf        Configuration dict:
         * dt_physics - integration step [s] (default: 1e-3)
        """
        super(QuadrotorModel, self).__init__(lab, conf=conf)
        self.params = params if params is not None else QuadrotorParams()
        self.disturbance = disturbance if disturbance is not None \
            else DisturbanceConfig()
        dt = float(self.conf['dt_physics'])
        if not (dt > 0 and dt <= 0.01):
            raise ConfigError('dt_physics must be in (0, 0.01], not %r' % dt)
        self.dt = dt
        self.reset(state)

    def reset(self, state=None):
        self.state = state.copy() if state is not None else RigidBodyState()
        self.x = self.state.to_vector()
        self.steps = 0
        self.t = 0.0

    def advance(self, thrusts_or_wrench, n_steps):
        """
        Integrate @param n_steps physics steps with the wrench held.
        The disturbance is sampled at the start of every physics step.

        @param thrusts_or_wrench  BodyWrench, or MotorThrusts
        @returns the new RigidBodyState
        """
        u = thrusts_or_wrench
        if not isinstance(u, BodyWrench):
            u = u.to_wrench(self.params)
        try:
            for _ in range(n_steps):
                f_ext, m_ext = self.disturbance.wrench_at(self.steps *
                                                          self.dt)
                self.x = rk4_vector(self.x, u.thrust, u.moment, self.dt,
                                    self.params, f_ext=f_ext, m_ext=m_ext)
                self.steps += 1
        finally:
            # clock and state stay on the last completed step
            self.t = self.steps * self.dt
            self.state = RigidBodyState.from_vector(self.x)
        return self.state
