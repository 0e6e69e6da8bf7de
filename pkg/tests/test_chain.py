import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellsim import qstate
from bellsim.chain import (
    BranchSet,
    PointerConfiguration,
    ReducedDensityMatrix,
    build_branches,
    coherence_factor,
    decoherence_scan_point,
    offdiagonal_norm,
    ready_state,
    reduced_density_dense_oracle,
    reduced_density_structured,
)
from bellsim.detector import decoherence_factor, make_array, make_detector

S2 = 1 / math.sqrt(2)
A, B = "1001", "0110"


def test_ready_state():
    r = ready_state()
    assert r.bits == (0, 0, 0, 0)
    assert r.is_ready and not r.is_post_absorption


def test_ready_state_tensor_leaves_photon_amplitudes():
    photon = qstate.ket([0, S2, -S2, 0], (2, 2))
    ready = qstate.basis((2, 2, 2, 2), ready_state().bits)
    joint = qstate.tensor(photon, ready)
    np.testing.assert_array_equal(joint.amps.reshape(4, 16)[:, 0], photon.amps)


def test_pointer_configuration_validation():
    with pytest.raises(ValueError):
        PointerConfiguration((1, 0, 2, 0))
    assert str(PointerConfiguration.parse("1001")) == "1001"
    assert not PointerConfiguration.parse("1100").is_post_absorption


def test_branches_theta_zero():
    b = build_branches(0)
    assert b.as_dict() == pytest.approx({A: S2, B: -S2})
    assert [str(c) for c in b.configs] == [A, B]


def test_branches_theta_half_pi():
    b = build_branches(math.pi / 2)
    assert b.as_dict() == pytest.approx({"1010": S2, "0101": S2})


def test_branches_quarter_pi():
    b = build_branches(math.pi / 4)
    assert [str(c) for c in b.configs] == [A, B, "1010", "0101"]
    np.testing.assert_allclose(b.probabilities, [0.25] * 4, atol=1e-15)


@given(theta=st.floats(-7, 7, allow_nan=False))
def test_branch_probabilities(theta):
    b = build_branches(theta)
    p = dict(zip(map(str, b.configs), b.probabilities))
    assert abs(p.get(A, 0) + p.get(B, 0) - math.cos(theta) ** 2) < 1e-12
    assert abs(p.get("1010", 0) + p.get("0101", 0) - math.sin(theta) ** 2) < 1e-12
    assert all(c.is_post_absorption for c in b.configs)


def test_branchset_invariants():
    with pytest.raises(ValueError):
        BranchSet((PointerConfiguration.parse(A), PointerConfiguration.parse(A)), [S2, S2])
    with pytest.raises(ValueError):
        BranchSet((PointerConfiguration.parse(A),), [0.5])


def test_coherence_table():
    f = 0.3 + 0.4j
    assert coherence_factor(0, 0, f) == 1
    assert coherence_factor(1, 1, f) == 1
    assert coherence_factor(1, 0, f) == f
    assert coherence_factor(0, 1, f) == f.conjugate()


def test_structured_diagonal_theta_zero():
    for seed in range(5):
        rho = reduced_density_structured(build_branches(0), make_array(seed, 6, "gibbs:2"))
        np.testing.assert_allclose(rho.diagonal, [0.5, 0.5], atol=1e-15)


def test_identity_detectors_keep_coherence():
    rho = reduced_density_structured(build_branches(0), make_array(0, 5, absorption="identity"))
    assert rho.element(A, B) == pytest.approx(-0.5, abs=1e-15)
    assert offdiagonal_norm(rho) == pytest.approx(0.5, abs=1e-15)


def test_offdiagonal_norm_of_diagonal_matrix():
    rho = ReducedDensityMatrix(build_branches(0).configs, np.diag([0.5, 0.5]))
    assert offdiagonal_norm(rho) == 0


def test_oracle_single_internal_state_is_pure_projector():
    dets = make_array(11, 1)
    b = build_branches(0)
    o = reduced_density_dense_oracle(b, dets)
    phases = [d.absorption[0, 0] for d in dets]
    expected_ab = -0.5 * phases[0] * phases[1].conjugate() * phases[2].conjugate() * phases[3]
    assert o.element(A, B) == pytest.approx(expected_ab, abs=1e-15)
    assert abs(abs(o.element(A, B)) - 0.5) < 1e-15
    ev = o.as_density_matrix().eigenvalues()
    assert ev[-1] == pytest.approx(1, abs=1e-12) and abs(ev[0]) < 1e-12


@pytest.mark.parametrize("M", [1, 2, 3])
@pytest.mark.parametrize("theta", [0, math.pi / 8, math.pi / 4, math.pi / 2, 3 * math.pi / 2])
def test_structured_matches_oracle(M, theta):
    b = build_branches(theta)
    for seed in range(3):
        dets = make_array(seed, M, "gibbs:1.5" if seed % 2 else "uniform")
        s = reduced_density_structured(b, dets)
        o = reduced_density_dense_oracle(b, dets)
        assert np.max(np.abs(s.entries - o.entries)) < 1e-12
        s.validate(b)
        o.validate(b)


def test_structured_matches_oracle_mixed_dims():
    dets = make_array(4, (1, 3, 2, 2), "gibbs:0.7")
    for theta in (0.0, 0.3, math.pi / 8):
        b = build_branches(theta)
        s, o = reduced_density_structured(b, dets), reduced_density_dense_oracle(b, dets)
        assert np.max(np.abs(s.entries - o.entries)) < 1e-12


def test_oracle_reports_cap():
    with pytest.raises(qstate.DenseCapError, match="dense cap"):
        reduced_density_dense_oracle(build_branches(0), make_array(0, 3), cap=10_000)


def test_detector_order_enforced():
    dets = make_array(0, 2)
    with pytest.raises(ValueError, match="ordered"):
        reduced_density_structured(build_branches(0), dets[::-1])


def test_diagonals_independent_of_detectors():
    b = build_branches(math.pi / 8)
    diags = [reduced_density_structured(b, make_array(s, 4)).diagonal for s in range(10)]
    diags += [reduced_density_dense_oracle(b, make_array(s, 2)).diagonal for s in range(3)]
    for d in diags:
        np.testing.assert_allclose(d, b.probabilities, atol=1e-12)
    assert all(np.array_equal(diags[0], d) for d in diags[:10])


@pytest.mark.parametrize("route", [reduced_density_structured, reduced_density_dense_oracle])
def test_locality_audit(route):
    """Each detector's suppression is exactly its own local factor."""
    b = build_branches(0)
    dets = make_array(21, 2, "gibbs:1")
    full = route(b, dets).element(A, B)
    bits_a, bits_b = PointerConfiguration.parse(A).bits, PointerConfiguration.parse(B).bits
    for d in range(4):
        swapped = list(dets)
        swapped[d] = dets[d].with_absorption(np.eye(2))
        partial = route(b, swapped).element(A, B)
        expected = coherence_factor(bits_a[d], bits_b[d], decoherence_factor(dets[d]))
        assert abs(full / partial - expected) < 1e-12


def test_oracle_off_diagonal_orientation():
    # rho_AB carries f_LV conj(f_LH) conj(f_RV) f_RH
    dets = make_array(8, 3)
    f = [decoherence_factor(d) for d in dets]
    o = reduced_density_dense_oracle(build_branches(0), dets)
    expected = -0.5 * f[0] * f[1].conjugate() * f[2].conjugate() * f[3]
    assert abs(o.element(A, B) - expected) < 1e-14
    assert o.element(B, A) == o.entries[1, 0]
    assert abs(o.element(B, A) - expected.conjugate()) < 1e-14


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32), theta=st.floats(0, math.pi), M=st.integers(1, 40))
def test_structured_hermitian_exactly(seed, theta, M):
    rho = reduced_density_structured(build_branches(theta), make_array(seed, M))
    np.testing.assert_array_equal(rho.entries, rho.entries.conj().T)
    rho.validate(build_branches(theta))


def test_offdiag_m8_scale():
    b = build_branches(0)
    vals = [offdiagonal_norm(reduced_density_structured(b, make_array(s, 8))) for s in range(500)]
    med = float(np.median(vals))
    # 0.5 * (1/8)^4 = 1.2e-4 sets the scale
    assert 1e-5 < med < 1e-3


def test_offdiag_m16_small_with_high_probability():
    _, offdiag, _ = decoherence_scan_point(16, 1000, seed=3)
    assert np.mean(offdiag < 1e-3) > 0.99
