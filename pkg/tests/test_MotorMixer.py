#!/usr/bin/env python

import numpy as np
import pytest

from quadtune.models.QuadrotorModel import BodyWrench, QuadrotorParams
from quadtune.models.MotorMixer import (
    MotorThrusts, VirtualControls, mixer_matrix, mixer_matrix_inv,
    thrusts_to_wrench, virtual_to_wrench, wrench_to_thrusts,
    wrench_to_virtual)


params = QuadrotorParams()


def test_equal_thrusts():
    w = thrusts_to_wrench(MotorThrusts([2.0, 2.0, 2.0, 2.0]), params)
    assert w.thrust == pytest.approx(8.0)
    np.testing.assert_allclose(w.moment, np.zeros(3), atol=1e-15)

    t = wrench_to_thrusts(BodyWrench(8.0), params)
    np.testing.assert_allclose(t.t, [2.0, 2.0, 2.0, 2.0], atol=1e-12)
    assert not t.saturated


def test_roll_moment():
    w = thrusts_to_wrench(MotorThrusts([0.0, 1.0, 1.0, 0.0]), params)
    assert w.moment[0] == pytest.approx(0.318198, abs=1e-6)
    assert w.moment[1] == pytest.approx(0.0, abs=1e-15)
    assert w.moment[2] == pytest.approx(0.0, abs=1e-15)


def test_mixer_inverse():
    np.testing.assert_allclose(mixer_matrix_inv(params) @
                               mixer_matrix(params), np.eye(4),
                               rtol=0, atol=1e-12)

    t = wrench_to_thrusts(thrusts_to_wrench(MotorThrusts([1, 2, 3, 4]),
                                            params), params)
    np.testing.assert_allclose(t.t, [1, 2, 3, 4], rtol=0, atol=1e-12)
    assert not t.saturated

    rng = np.random.default_rng(7)
    for _ in range(1000):
        t0 = rng.uniform(0.1, params.T_max - 0.1, 4)
        t = wrench_to_thrusts(thrusts_to_wrench(MotorThrusts(t0), params),
                              params)
        np.testing.assert_allclose(t.t, t0, rtol=0, atol=1e-12)


def test_saturation():
    t = wrench_to_thrusts(BodyWrench(100.0), params)
    np.testing.assert_array_equal(t.t, [8.43] * 4)
    assert t.saturated
    assert t.t4 == 8.43

    again = wrench_to_thrusts(thrusts_to_wrench(t, params), params)
    np.testing.assert_allclose(again.t, t.t, atol=1e-12)

    t = wrench_to_thrusts(BodyWrench(0.0, [0.5, 0, 0]), params)
    assert np.all(t.t >= 0)
    assert t.saturated


def test_virtual_to_wrench():
    w = virtual_to_wrench(VirtualControls(), params)
    assert w.thrust == 0.0
    np.testing.assert_array_equal(w.moment, np.zeros(3))

    tau_T = 1 + params.m_tot * params.g / (4 * params.T_max)
    assert tau_T == pytest.approx(1.3491, abs=1e-4)
    w = virtual_to_wrench(VirtualControls(tau_T=tau_T), params)
    assert w.thrust == pytest.approx(11.772, abs=1e-9)

    w = virtual_to_wrench(VirtualControls(tau_Y=0.1), params)
    assert w.moment[2] == pytest.approx(0.0799164, abs=1e-7)

    w = virtual_to_wrench(VirtualControls(tau_T=0.5), params)
    assert w.thrust == 0.0


def test_virtual_superposition():
    a = VirtualControls(tau_T=1.2, tau_R=0.01, tau_P=-0.02, tau_Y=0.03)
    b = VirtualControls(tau_T=1.1, tau_R=-0.03, tau_P=0.01, tau_Y=0.02)
    ab = VirtualControls(tau_T=1.0, tau_R=a.tau_R + b.tau_R,
                         tau_P=a.tau_P + b.tau_P, tau_Y=a.tau_Y + b.tau_Y)
    np.testing.assert_allclose(virtual_to_wrench(ab, params).moment,
                               virtual_to_wrench(a, params).moment +
                               virtual_to_wrench(b, params).moment,
                               rtol=0, atol=1e-15)

    vc = wrench_to_virtual(virtual_to_wrench(a, params), params)
    for key in ('tau_T', 'tau_R', 'tau_P', 'tau_Y'):
        assert getattr(vc, key) == pytest.approx(getattr(a, key), abs=1e-12)
