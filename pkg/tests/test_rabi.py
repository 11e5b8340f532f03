import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import angles, random_states, states
from rabitomo.errors import ValidationError
from rabitomo.qubit import X_AXIS, Y_AXIS, PureState, pure_to_bloch, su2_rotate
from rabitomo.rabi import (DEGENERATE_AMPLITUDE, RabiModel, RotationAxis, forward_phases,
                           ideal_signal, is_degenerate, rabi_amplitude, z_projection)


def _oracle_z(s, axis, angle):
    ax = X_AXIS if axis is RotationAxis.X else Y_AXIS
    return pure_to_bloch(su2_rotate(s, ax, angle)).z


def test_z_projection_examples():
    assert z_projection(PureState(0.0), "x", math.pi) == pytest.approx(-1.0, abs=1e-15)
    for w in np.linspace(0, 7, 15):
        assert z_projection(PureState(math.pi / 2, 0.0), RotationAxis.X, w) == pytest.approx(0, abs=1e-15)


def test_z_projection_45_30_is_shifted_cosine():
    s = PureState.from_degrees(45, 30)
    pp = forward_phases(s)
    assert math.degrees(pp.alpha) == pytest.approx(26.565051177, abs=1e-7)
    w = np.linspace(0, 4 * math.pi, 101)
    np.testing.assert_allclose(z_projection(s, "x", w), pp.amp_x * np.cos(w - pp.alpha), atol=1e-9)


def test_z_projection_matches_unitary_oracle_random():
    rng = np.random.default_rng(7)
    for s in random_states(1000, 8):
        axis = RotationAxis.X if rng.random() < 0.5 else RotationAxis.Y
        w = rng.uniform(-3 * math.pi, 3 * math.pi)
        assert abs(z_projection(s, axis, w) - _oracle_z(s, axis, w)) < 1e-12


@given(states, angles)
def test_forward_phases_reproduce_traces(s, w):
    pp = forward_phases(s)
    assert abs(z_projection(s, "x", w) - pp.amp_x * math.cos(w - pp.alpha)) < 1e-12
    assert abs(z_projection(s, "y", w) - pp.amp_y * math.cos(w + pp.beta)) < 1e-12
    ct, st_, cp, sp = math.cos(s.theta), math.sin(s.theta), math.cos(s.phi), math.sin(s.phi)
    assert abs(pp.amp_x ** 2 - (ct ** 2 + st_ ** 2 * sp ** 2)) < 1e-12
    assert abs(pp.amp_y ** 2 - (ct ** 2 + st_ ** 2 * cp ** 2)) < 1e-12
    assert -math.pi < pp.alpha <= math.pi and -math.pi < pp.beta <= math.pi


def test_forward_phases_examples():
    pp = forward_phases(PureState(0.0))
    assert (pp.alpha, pp.beta, pp.amp_x, pp.amp_y) == (0.0, 0.0, 1.0, 1.0)
    pp = forward_phases(PureState.from_degrees(45, 30))
    assert math.tan(pp.alpha) == pytest.approx(0.5, abs=1e-12)
    assert math.tan(pp.beta) == pytest.approx(math.cos(math.radians(30)), abs=1e-12)
    assert math.degrees(pp.beta) == pytest.approx(40.893394649, abs=1e-7)
    pp = forward_phases(PureState.from_degrees(90, 0))
    assert pp.amp_x == pytest.approx(0, abs=1e-15) and pp.amp_y == pytest.approx(1.0)


@given(st.floats(0.0, math.pi), st.floats(0, 2 * math.pi))
def test_tangent_identity(theta, phi):
    if abs(theta - math.pi / 2) <= 1e-3 or theta > math.pi / 2:
        return
    pp = forward_phases(PureState(theta, phi))
    lhs = math.tan(pp.alpha) ** 2 + math.tan(pp.beta) ** 2
    assert lhs == pytest.approx(math.tan(theta) ** 2, rel=1e-9, abs=1e-9)


@given(states)
def test_degeneracy_matches_axis_angle(s):
    v = pure_to_bloch(s).as_array()
    for axis, n in ((RotationAxis.X, [1, 0, 0]), (RotationAxis.Y, [0, 1, 0])):
        # amplitude = sin of the angle between Bloch vector and drive axis
        gamma = math.acos(min(1.0, abs(float(np.dot(v, n)))))
        assert is_degenerate(s, axis) == (math.sin(gamma) < DEGENERATE_AMPLITUDE) or \
            abs(math.sin(gamma) - DEGENERATE_AMPLITUDE) < 1e-12
        assert rabi_amplitude(s, axis) == pytest.approx(math.sin(gamma), abs=1e-9)


def test_ideal_signal_examples():
    m = RabiModel(rabi_frequency=2 * math.pi * 5e6, contrast=0.25, baseline=3.0)
    assert ideal_signal(m, PureState(0.0), "x", 0.0) == pytest.approx(3.0 * 1.25)
    m = RabiModel(contrast=0.1, baseline=100.0)
    assert ideal_signal(m, PureState(0.0), "x", math.pi / m.rabi_frequency) == pytest.approx(90.0, abs=1e-9)
    with pytest.raises(ValidationError):
        ideal_signal(m, PureState(0.0), "x", -1e-9)


@given(states, st.floats(0, 1e-6))
def test_ideal_signal_periodic_and_monotone(s, tau):
    m = RabiModel(baseline=2.0)
    a = ideal_signal(m, s, "y", tau)
    b = ideal_signal(m, s, "y", tau + m.period)
    assert abs(a - b) <= 1e-12 * abs(a)
    z = z_projection(s, "y", m.rabi_frequency * tau)
    assert a == pytest.approx(2.0 * (1 + 0.25 * z), rel=1e-12)


def test_decay_envelope():
    m = RabiModel(decay_time=1e-6)
    tau = np.array([0.0, 1e-6])
    sig = ideal_signal(m, PureState(0.0), "x", tau) - 1.0
    z = z_projection(PureState(0.0), "x", m.rabi_frequency * tau)
    np.testing.assert_allclose(sig, 0.25 * np.exp(-tau / 1e-6) * z, atol=1e-15)


def test_model_validation_and_axis_parse():
    with pytest.raises(ValidationError):
        RabiModel(rabi_frequency=0)
    with pytest.raises(ValidationError):
        RabiModel(contrast=1.5)
    with pytest.raises(ValidationError):
        RabiModel(decay_time=-1)
    assert RotationAxis.parse("Y") is RotationAxis.Y
    assert RotationAxis.Y.drive_phase - RotationAxis.X.drive_phase == pytest.approx(math.pi / 2)
    with pytest.raises(ValidationError):
        RotationAxis.parse("z")
