import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellsim.photon import (
    MeasurementSetting,
    PhotonPairState,
    basis_rotation,
    canonical_angle,
    expand_in_settings,
    expand_in_two_settings,
    make_singlet,
)

S2 = 1 / math.sqrt(2)
angles = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def project(state, theta_a, theta_b):
    """<a_i| <b_j| psi> by explicit inner products with the rotated basis vectors."""
    va = [np.array([math.cos(theta_a), math.sin(theta_a)]), np.array([-math.sin(theta_a), math.cos(theta_a)])]
    vb = [np.array([math.cos(theta_b), math.sin(theta_b)]), np.array([-math.sin(theta_b), math.cos(theta_b)])]
    psi = state.amps
    return np.array([np.vdot(np.kron(a, b), psi) for a in va for b in vb])


def test_singlet_amplitudes():
    np.testing.assert_array_equal(make_singlet().amps, [0, 0.7071067811865475, -0.7071067811865475, 0])
    assert abs(np.vdot(make_singlet().amps, make_singlet().amps) - 1) < 1e-12


@given(theta=angles)
def test_singlet_invariant_under_common_rotation(theta):
    rotated = expand_in_two_settings(make_singlet(), theta, theta)
    overlap = np.vdot(make_singlet().amps, rotated)
    assert abs(abs(overlap) - 1) < 1e-12


def test_rotation_examples():
    np.testing.assert_array_equal(basis_rotation(0), np.eye(2))
    r = basis_rotation(math.pi / 2)
    np.testing.assert_allclose(r[0], [0, 1], atol=1e-15)  # V' = H
    np.testing.assert_allclose(r[1], [-1, 0], atol=1e-15)  # H' = -V
    np.testing.assert_allclose(basis_rotation(0.7) @ basis_rotation(-0.7), np.eye(2), atol=1e-12)


@given(theta=angles)
def test_rotation_orthonormal(theta):
    r = basis_rotation(theta)
    np.testing.assert_allclose(r.T @ r, np.eye(2), atol=1e-12)


def test_expand_examples():
    np.testing.assert_allclose(expand_in_settings(make_singlet(), 0), [0, S2, -S2, 0], atol=1e-15)
    quarter = expand_in_settings(make_singlet(), math.pi / 4)
    np.testing.assert_allclose(np.abs(quarter), [0.5] * 4, atol=1e-15)


@given(theta=angles)
def test_expand_matches_closed_form_and_projection(theta):
    amps = expand_in_settings(make_singlet(), theta)
    s, c = math.sin(theta), math.cos(theta)
    np.testing.assert_allclose(amps, np.array([s, c, -c, s]) * S2, atol=1e-12)
    np.testing.assert_allclose(amps, project(make_singlet(), 0.0, theta), atol=1e-12)
    assert abs(np.sum(np.abs(amps) ** 2) - 1) < 1e-12


@given(theta=angles)
def test_similar_opposite_split(theta):
    p = np.abs(expand_in_settings(make_singlet(), theta)) ** 2
    assert abs(p[0] + p[3] - math.sin(theta) ** 2) < 1e-12
    assert abs(p[1] + p[2] - math.cos(theta) ** 2) < 1e-12


@given(t1=angles, t2=angles)
def test_rotation_composition(t1, t2):
    once = expand_in_settings(PhotonPairState(expand_in_settings(make_singlet(), t1)), t2)
    np.testing.assert_allclose(once, expand_in_settings(make_singlet(), t1 + t2), atol=1e-12)


@given(ta=angles, tb=angles)
def test_two_settings_reduce_to_relative_angle(ta, tb):
    general = expand_in_two_settings(make_singlet(), ta, tb)
    np.testing.assert_allclose(general, project(make_singlet(), ta, tb), atol=1e-12)
    np.testing.assert_allclose(general, expand_in_settings(make_singlet(), tb - ta), atol=1e-12)


def test_canonical_angle():
    assert canonical_angle(0) == 0
    assert canonical_angle(math.pi) == 0
    assert abs(canonical_angle(-math.pi / 4) - 3 * math.pi / 4) < 1e-15
    assert MeasurementSetting(9 * math.pi / 8, "b").theta == pytest.approx(math.pi / 8)
    with pytest.raises(ValueError):
        canonical_angle(float("inf"))


@given(theta=angles)
def test_canonical_angle_range_and_statistics(theta):
    t = canonical_angle(theta)
    assert 0 <= t < math.pi
    p1 = np.abs(expand_in_settings(make_singlet(), theta)) ** 2
    p2 = np.abs(expand_in_settings(make_singlet(), t)) ** 2
    np.testing.assert_allclose(p1, p2, atol=1e-12)


def test_pair_state_must_be_normalized():
    with pytest.raises(ValueError):
        PhotonPairState([1, 1, 0, 0])
