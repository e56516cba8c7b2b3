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
Reference generator for the take-off / hover / circle / hover / landing
mission. Pure functions of time.
"""

from quadtune.quadtune import ConfigError, OutOfRange

import math
from dataclasses import dataclass, field

import numpy as np

YAW_MODES = ('constant_zero', 'tangent')
CIRCLE_PROFILES = ('constant_rate', 'smooth')

# Tolerance on the mission end, absorbs the float drift of k * dt clocks.
T_EPS = 1e-9


@dataclass
class TrajectoryConfig:
    t_takeoff: float = 10.0
    t_hover1: float = 2.5
    t_circle: float = 20.0
    t_hover2: float = 2.5
    t_land: float = 10.0
    altitude: float = 5.0
    radius: float = 3.0
    yaw_mode: str = 'constant_zero'
    circle_profile: str = 'constant_rate'

    def __post_init__(self):
        for key in ('t_takeoff', 't_hover1', 't_circle', 't_hover2',
                    't_land', 'altitude', 'radius'):
            val = getattr(self, key)
            if not (math.isfinite(val) and val > 0):
                raise ConfigError('trajectory %s must be > 0, not %r' %
                                  (key, val))
        if self.yaw_mode not in YAW_MODES:
            raise ConfigError('Unknown yaw_mode %r, expected one of %s' %
                              (self.yaw_mode, ', '.join(YAW_MODES)))
        if self.circle_profile not in CIRCLE_PROFILES:
            raise ConfigError('Unknown circle_profile %r, expected one of %s' %
                              (self.circle_profile,
                               ', '.join(CIRCLE_PROFILES)))

    def boundaries(self):
        """ Segment end times: take-off, hover, circle, hover, landing """
        return np.cumsum([self.t_takeoff, self.t_hover1, self.t_circle,
                          self.t_hover2, self.t_land])


@dataclass
class ReferencePoint:
    p_r: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_r: np.ndarray = field(default_factory=lambda: np.zeros(3))
    psi_r: float = 0.0


def min_jerk(tau):
    """
    Normalized quintic rest-to-rest profile on tau in [0, 1].
    @returns (s, ds/dtau)
    """
    t2 = tau * tau
    t3 = t2 * tau
    s = t3 * (10.0 - 15.0 * tau + 6.0 * t2)
    ds = 30.0 * t2 * (1.0 - 2.0 * tau + t2)
    return s, ds


def mission_duration(cfg):
    return float(cfg.t_takeoff + cfg.t_hover1 + cfg.t_circle +
                 cfg.t_hover2 + cfg.t_land)


def _tangent_yaw(angle, cfg):
    if cfg.yaw_mode == 'tangent':
        return math.remainder(angle + math.pi / 2.0, 2.0 * math.pi)
    return 0.0


def reference_at(t, cfg):
    """
    @param t    Mission time [s], 0 <= t <= mission_duration(cfg)
    @param cfg  TrajectoryConfig
    @returns ReferencePoint
    """
    total = mission_duration(cfg)
    if not (t >= 0.0 and t <= total + T_EPS):
        raise OutOfRange('t=%r outside mission [0, %r]' % (t, total))
    t = min(t, total)

    R, alt = cfg.radius, cfg.altitude
    t1, t2, t3, t4, _ = cfg.boundaries()

    if t < t1:
        s, ds = min_jerk(t / cfg.t_takeoff)
        return ReferencePoint(np.array([R, 0.0, alt * s]),
                              np.array([0.0, 0.0, alt * ds / cfg.t_takeoff]),
                              _tangent_yaw(0.0, cfg))

    if t < t2:
        return ReferencePoint(np.array([R, 0.0, alt]), np.zeros(3),
                              _tangent_yaw(0.0, cfg))

    if t < t3:
        tau = (t - t2) / cfg.t_circle
        if cfg.circle_profile == 'smooth':
            s, ds = min_jerk(tau)
        else:
            s, ds = tau, 1.0
        a = 2.0 * math.pi * s
        a_dot = 2.0 * math.pi * ds / cfg.t_circle
        ca, sa = math.cos(a), math.sin(a)
        return ReferencePoint(np.array([R * ca, R * sa, alt]),
                              np.array([-R * a_dot * sa, R * a_dot * ca,
                                        0.0]),
                              _tangent_yaw(a, cfg))

    if t < t4:
        return ReferencePoint(np.array([R, 0.0, alt]), np.zeros(3),
                              _tangent_yaw(0.0, cfg))

    s, ds = min_jerk((t - t4) / cfg.t_land)
    return ReferencePoint(np.array([R, 0.0, alt * (1.0 - s)]),
                          np.array([0.0, 0.0, -alt * ds / cfg.t_land]),
                          _tangent_yaw(0.0, cfg))
