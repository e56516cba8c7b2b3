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
Motor mixing: per-motor thrusts <-> body wrench <-> adimensional
virtual controls.

Motor numbering follows the X configuration: roll moment from
(T2 + T3) - (T1 + T4), pitch moment from (T1 + T3) - (T2 + T4),
yaw moment from (T1 + T2) - (T3 + T4).
"""

from quadtune.models.QuadrotorModel import BodyWrench

import math
from dataclasses import dataclass, field

import numpy as np

SQRT2_2 = math.sqrt(2.0) / 2.0


@dataclass
class MotorThrusts:
    """ Per-motor thrusts [N] and whether the mixer clamped any of them """
    t: np.ndarray = field(default_factory=lambda: np.zeros(4))
    saturated: bool = False

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)

    t1 = property(lambda self: self.t[0])
    t2 = property(lambda self: self.t[1])
    t3 = property(lambda self: self.t[2])
    t4 = property(lambda self: self.t[3])

    def to_wrench(self, params):
        return thrusts_to_wrench(self, params)


@dataclass
class VirtualControls:
    tau_T: float = 1.0
    tau_R: float = 0.0
    tau_P: float = 0.0
    tau_Y: float = 0.0


def mixer_matrix(params):
    """ 4x4 map from [T1..T4] to [T, M_p, M_q, M_r] """
    k = SQRT2_2 * params.l
    c = params.drag_ratio
    return np.array([[1.0, 1.0, 1.0, 1.0],
                     [-k, k, k, -k],
                     [k, -k, k, -k],
                     [c, c, -c, -c]])


def mixer_matrix_inv(params):
    """ The mixer rows are mutually orthogonal: inverse is M^T / |row|^2 """
    M = mixer_matrix(params)
    return M.T / np.sum(M * M, axis=1)


def thrusts_to_wrench(t, params):
    """
    @param t  MotorThrusts
    @returns BodyWrench
    """
    w = mixer_matrix(params) @ t.t
    return BodyWrench(thrust=max(w[0], 0.0), moment=w[1:4])


def wrench_to_thrusts(w, params):
    """
    Solve the mixer for per-motor thrusts, then clamp each motor to
    [0, T_max]. The clamp is reported through MotorThrusts.saturated.
    """
    raw = mixer_matrix_inv(params) @ np.concatenate(([w.thrust], w.moment))
    t = np.clip(raw, 0.0, params.T_max)
    return MotorThrusts(t=t, saturated=bool(np.any(t != raw)))


def virtual_to_wrench(vc, params):
    """
    T = 4 T_max (tau_T - 1)
    M_p = -4 T_max tau_R l sqrt(2)/2
    M_q = -4 T_max tau_P l sqrt(2)/2
    M_r = 4 T_max tau_Y c_D/c_L
    """
    s = 4.0 * params.T_max
    k = SQRT2_2 * params.l
    thrust = s * (vc.tau_T - 1.0)
    return BodyWrench(thrust=max(thrust, 0.0),
                      moment=[-s * vc.tau_R * k,
                              -s * vc.tau_P * k,
                              s * vc.tau_Y * params.drag_ratio])


def wrench_to_virtual(w, params):
    """ Inverse of virtual_to_wrench """
    s = 4.0 * params.T_max
    k = SQRT2_2 * params.l
    return VirtualControls(tau_T=1.0 + w.thrust / s,
                           tau_R=-w.moment[0] / (s * k),
                           tau_P=-w.moment[1] / (s * k),
                           tau_Y=w.moment[2] / (s * params.drag_ratio))
